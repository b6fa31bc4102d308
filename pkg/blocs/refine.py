import configparser
import datetime
import logging
import time
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .events import Events
from .exceptions import *
from .image import BlockGeometry, Image, ImageLike, pixels_of
from .metrics import mse, psnr
from .operators import Operators
from .patches import BOTH, GLOBAL, LOCAL, PatchConfig, solve_alpha, threshold_for
from .sensing import BlockSensingOperator, MeasurementSet
from .trace import ConvergenceTrace, IterationRecord
from .tv import TvParams, solve_mbtv_nllm
from .util import format_delta, plural, relative_change, step_change

logger = logging.getLogger(__name__)

__all__ = ["REFINE_MODES", "STILL_METHODS", "RefineParams", "CstState", "SideTerm",
        "cst_direction", "cst_step_size", "update_lambda1", "run_refinement",
        "solve_refined", "recover_still"]

# Refinement variant -> sparsifying transform of its alpha-subproblem
REFINE_MODES: Dict[str, str] = {
        "gst": GLOBAL,
        "lst": LOCAL,
        "cst": BOTH,
}

STILL_METHODS = ["mbtv", "mbtv-nllm", "gst", "lst", "cst"]

class RefineParams:
    def __init__(self,
            mu1: float = 0.0025,
            max_iter: int = 30,
            tol: float = 1e-5,
            patches: Optional[PatchConfig] = None,
            ) -> None:
        if not mu1 > 0:
            raise ConfigError(f"mu1 must be positive, got {mu1}")
        if max_iter < 1:
            raise ConfigError("the iteration cap must be at least 1")

        self.mu1 = mu1
        self.max_iter = max_iter
        self.tol = tol
        self.patches = patches if patches is not None else PatchConfig()

    @classmethod
    def from_section(cls,
            section: configparser.SectionProxy,
            patches: Optional[PatchConfig] = None,
            ) -> "RefineParams":
        return cls(
                mu1=section.getfloat("mu1", 0.0025),
                max_iter=section.getint("max_iter", 30),
                tol=section.getfloat("tol", 1e-5),
                patches=patches,
        )

class CstState:
    """
    Iterates of the refinement: the image u, the latest synthesized image
    Phi(alpha), the scaled multiplier lambda_1 and the transform mode of the
    alpha-subproblem.
    """

    def __init__(self, u: np.ndarray, mu1: float, mode: str) -> None:
        if mode not in (LOCAL, GLOBAL, BOTH):
            raise ConfigError(f"unknown transform mode {mode!r}")

        self.u = u
        self.synthesized = u.copy()
        self.lambda1 = np.zeros_like(u)
        self.mu1 = mu1
        self.mode = mode

class SideTerm:
    """
    An additional penalty mu/2 ||u - target - lam||^2 that pulls the iterate
    towards side information.

    If refresh is given, the target is recomputed from the current iterate
    at the start of every period-th iteration (1, 1 + period, ...).
    """

    def __init__(self,
            mu: float,
            target: ImageLike,
            refresh: Optional[Callable[[np.ndarray], np.ndarray]] = None,
            period: int = 1,
            ) -> None:
        if mu < 0:
            raise ConfigError(f"the side information penalty must be >= 0, got {mu}")
        if period < 1:
            raise ConfigError(f"refresh period must be >= 1, got {period}")

        self.mu = mu
        self.target = pixels_of(target).copy()
        self.lam = np.zeros_like(self.target)
        self._refresh = refresh
        self._period = period

    def maybe_refresh(self, u: np.ndarray, iteration: int) -> None:
        if self._refresh is None or self.mu == 0:
            return
        if (iteration - 1) % self._period == 0:
            self.target = self._refresh(u)

    def direction(self, u: np.ndarray) -> np.ndarray:
        return self.mu * (u - self.target - self.lam)

    def penalty(self, u: np.ndarray) -> float:
        r = u - self.target - self.lam
        return self.mu / 2 * float(np.vdot(r, r))

def cst_direction(
        u: np.ndarray,
        synthesized: np.ndarray,
        lambda1: np.ndarray,
        b: np.ndarray,
        mu1: float,
        ops: Operators,
        ) -> np.ndarray:
    """
    d = mu1 (u - Phi(alpha) - lambda_1) - A^T (b - A u)
    """

    u = np.asarray(u, dtype=np.float64)
    if u.shape != np.shape(synthesized) or u.shape != np.shape(lambda1):
        raise GeometryError((f"u {u.shape}, Phi(alpha) {np.shape(synthesized)}"
                f" and lambda_1 {np.shape(lambda1)} must have the same shape"))

    return mu1 * (u - synthesized - lambda1) - ops.adjoint(b - ops.forward(u))

def cst_step_size(d: np.ndarray, mu1: float, ops: Operators) -> float:
    """
    eta = <d, d> / <d, G d> with G = A^T A + mu1 I, or 0 if d is zero.
    """

    dd = float(np.vdot(d, d))
    if dd == 0:
        return 0.0

    ad = ops.forward(d)
    return dd / (float(np.vdot(ad, ad)) + mu1 * dd)

def update_lambda1(
        lambda1: np.ndarray,
        u_next: np.ndarray,
        synthesized_next: np.ndarray,
        ) -> np.ndarray:
    return lambda1 - (u_next - synthesized_next)

def _objective(
        u: np.ndarray,
        state: CstState,
        b: np.ndarray,
        ops: Operators,
        side: Optional[SideTerm],
        ) -> float:
    e = b - ops.forward(u)
    r = u - state.synthesized - state.lambda1
    value = 0.5 * float(np.vdot(e, e)) + state.mu1 / 2 * float(np.vdot(r, r))
    if side is not None:
        value += side.penalty(u)
    return value

def run_refinement(
        u0: ImageLike,
        b: MeasurementSet,
        op: BlockSensingOperator,
        geom: BlockGeometry,
        mode: str,
        params: Optional[RefineParams] = None,
        tau_hard: Optional[float] = None,
        side: Optional[SideTerm] = None,
        reference: Optional[Image] = None,
        events: Optional[Events] = None,
        name: str = "refine",
        ) -> Tuple[Image, ConvergenceTrace]:
    """
    Refine an initial estimate u0 by alternating the patch-based sparse
    representation (alpha-subproblem, run on u - lambda_1) with one
    Barzilai-Borwein step on u and the lambda_1 update.

    mode is LOCAL, GLOBAL or BOTH. tau_hard defaults to the threshold
    derived from u0 and is kept for the whole run. An optional side term
    adds side information regularization.

    The refinement is scale-equivariant: scaling u0, b and tau_hard by c
    scales the result by c, so it runs on intensities directly.

    If an iterate becomes non-finite, the last finite one is returned and the
    trace is flagged as diverged.
    """

    if params is None:
        params = RefineParams()
    if events is None:
        events = Events()

    b.check(op, geom)
    ops = Operators(op, geom)
    bvec = b.vector
    cfg = params.patches

    u = pixels_of(u0).copy()
    geom.check(u)
    if tau_hard is None:
        tau_hard = threshold_for(u, cfg)

    mu = params.mu1 + (side.mu if side is not None else 0.0)
    state = CstState(u, params.mu1, mode)
    trace = ConvergenceTrace(name)

    logger.info((f"Starting {name} refinement ({mode} transform,"
            f" tau_hard={tau_hard:.4g})"))
    started = time.perf_counter()

    for t in range(1, params.max_iter + 1):
        if side is not None:
            side.maybe_refresh(state.u, t)

        alpha_input = state.u - state.lambda1
        stage_psnr = None
        if state.mode == BOTH:
            stage = solve_alpha(alpha_input, LOCAL, cfg, tau_hard)
            if reference is not None:
                stage_psnr = psnr(reference, stage)
            synthesized = solve_alpha(stage, GLOBAL, cfg, tau_hard).pixels
        else:
            synthesized = solve_alpha(alpha_input, state.mode, cfg, tau_hard).pixels
        state.synthesized = synthesized

        d = cst_direction(state.u, synthesized, state.lambda1, bvec,
                params.mu1, ops)
        if side is not None:
            d = d + side.direction(state.u)

        eta = cst_step_size(d, mu, ops)
        if eta == 0:
            trace.converged = True
            break

        u_next = state.u - eta * d
        if not np.all(np.isfinite(u_next)):
            trace.diverged = True
            logger.warning((f"{name} diverged in iteration {t}, keeping the"
                    " last finite iterate"))
            break

        state.lambda1 = update_lambda1(state.lambda1, u_next, synthesized)
        if side is not None:
            side.lam = update_lambda1(side.lam, u_next, side.target)

        change = relative_change(state.u, u_next)
        record = IterationRecord(
                iteration=t,
                objective=_objective(u_next, state, bvec, ops, side),
                misfit=float(np.linalg.norm(ops.forward(u_next) - bvec)),
                rel_change=change,
                step_change=step_change(state.u, u_next),
                psnr=psnr(reference, u_next) if reference is not None else None,
                mse=mse(reference, u_next) if reference is not None else None,
                stage_psnr=stage_psnr,
        )
        state.u = u_next
        trace.append(record)
        events.fire("iteration", record)
        logger.debug(f"{name} {record!r}")

        if change <= params.tol:
            trace.converged = True
            break

    elapsed = datetime.timedelta(seconds=time.perf_counter() - started)
    n = trace.iterations
    if trace.converged:
        logger.info((f"{name} converged after {n} iteration{plural(n)}"
                f" ({format_delta(elapsed)})"))
    elif not trace.diverged:
        logger.warning((f"{name} stopped after {n} iteration{plural(n)}"
                f" without converging ({format_delta(elapsed)})"))

    events.fire("finished", trace)
    return Image(state.u), trace

def solve_refined(
        b: MeasurementSet,
        op: BlockSensingOperator,
        geom: BlockGeometry,
        mode: str = "cst",
        params: Optional[RefineParams] = None,
        tv_params: Optional[TvParams] = None,
        reference: Optional[Image] = None,
        events: Optional[Events] = None,
        ) -> Tuple[Image, ConvergenceTrace]:
    """
    MBTV-NLLM recovery followed by the patch-based refinement.

    mode is "gst" (global transform), "lst" (local transform) or "cst"
    (local, then global). The TV trace is attached to the returned trace as
    its initial_stage.
    """

    key = mode.lower()
    if key not in REFINE_MODES:
        raise ConfigError(f"unknown refinement mode {mode!r}")

    initial, tv_trace = solve_mbtv_nllm(b, op, geom, tv_params, reference, events)

    image, trace = run_refinement(initial, b, op, geom, REFINE_MODES[key], params,
            reference=reference, events=events, name=key)
    trace.initial_stage = tv_trace
    return image, trace

def recover_still(
        method: str,
        b: MeasurementSet,
        op: BlockSensingOperator,
        geom: BlockGeometry,
        tv_params: Optional[TvParams] = None,
        params: Optional[RefineParams] = None,
        reference: Optional[Image] = None,
        events: Optional[Events] = None,
        ) -> Tuple[Image, ConvergenceTrace]:
    """
    Recover a still image with one of STILL_METHODS. The mbtv variants
    override tv_params.use_nllm.
    """

    key = method.lower()
    if key in ["mbtv", "mbtv-nllm"]:
        tv = tv_params if tv_params is not None else TvParams()
        if tv.use_nllm != (key == "mbtv-nllm"):
            tv = TvParams(tv.beta, tv.mu, tv.inner_tol, tv.outer_tol,
                    tv.max_inner, tv.max_outer, key == "mbtv-nllm", tv.nlm,
                    tv.scope_mode, tv.span)
        return solve_mbtv_nllm(b, op, geom, tv, reference, events)

    if key in REFINE_MODES:
        return solve_refined(b, op, geom, key, params, tv_params, reference,
                events)

    raise ConfigError(f"{method!r} can't recover still images")
