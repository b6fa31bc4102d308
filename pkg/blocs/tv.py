import configparser
import datetime
import logging
import time
from typing import Optional, Tuple

import numpy as np

from .events import Events
from .exceptions import *
from .image import BlockGeometry, Image
from .metrics import mse, psnr
from .nlm import NlmParams, update_multiplier_nllm
from .operators import GradientField, GradientScope, Operators
from .sensing import BlockSensingOperator, MeasurementSet
from .trace import ConvergenceTrace, IterationRecord
from .util import format_delta, plural, relative_change, step_change

logger = logging.getLogger(__name__)

__all__ = ["TvParams", "TvSolverState", "shrink_w", "bb_direction",
        "bb_step_size", "augmented_lagrangian", "solve_mbtv_nllm"]

class TvParams:
    """
    Parameters of the augmented Lagrangian TV recovery.

    - beta, mu - penalties of the gradient constraint Du = w and of the
      measurement constraint Au = b
    - inner_tol, outer_tol - relative-change tolerances of the two loops
    - max_inner, max_outer - iteration caps
    - use_nllm - filter the gradient multiplier with NLM after every outer
      iteration (False gives classical augmented Lagrangian TV)
    - scope_mode - "frame", "multi_block" or "per_block"
    - span - super-block span for "multi_block" (0 means the whole grid)
    """

    def __init__(self,
            beta: float = 128.0,
            mu: float = 32.0,
            inner_tol: float = 1e-4,
            outer_tol: float = 1e-5,
            max_inner: int = 20,
            max_outer: int = 50,
            use_nllm: bool = True,
            nlm: Optional[NlmParams] = None,
            scope_mode: str = GradientScope.FRAME,
            span: int = 0,
            ) -> None:
        if not (beta > 0 and mu > 0):
            raise ConfigError(f"beta and mu must be positive, got {beta} and {mu}")
        if max_inner < 1 or max_outer < 1:
            raise ConfigError("iteration caps must be at least 1")
        if scope_mode not in GradientScope.MODES:
            raise ConfigError(f"unknown gradient scope {scope_mode!r}")
        if span < 0:
            raise ConfigError(f"span must be >= 0, got {span}")

        self.beta = beta
        self.mu = mu
        self.inner_tol = inner_tol
        self.outer_tol = outer_tol
        self.max_inner = max_inner
        self.max_outer = max_outer
        self.use_nllm = use_nllm
        self.nlm = nlm if nlm is not None else NlmParams()
        self.scope_mode = scope_mode
        self.span = span

    @classmethod
    def from_section(cls,
            section: configparser.SectionProxy,
            nlm: Optional[NlmParams] = None,
            ) -> "TvParams":
        return cls(
                beta=section.getfloat("beta", 128.0),
                mu=section.getfloat("mu", 32.0),
                inner_tol=section.getfloat("inner_tol", 1e-4),
                outer_tol=section.getfloat("outer_tol", 1e-5),
                max_inner=section.getint("max_inner", 20),
                max_outer=section.getint("max_outer", 50),
                use_nllm=section.getboolean("use_nllm", True),
                nlm=nlm,
                scope_mode=section.get("scope", GradientScope.FRAME),
                span=section.getint("span", 0),
        )

    def scope(self, geom: BlockGeometry) -> GradientScope:
        if self.scope_mode == GradientScope.FRAME:
            return GradientScope.frame()
        if self.scope_mode == GradientScope.PER_BLOCK:
            return GradientScope.per_block(geom.block_side)

        span = self.span
        if span == 0:
            span = max(geom.grid_rows, geom.grid_cols)
        return GradientScope.multi_block(geom.block_side, span)

class TvSolverState:
    """
    The iterates of the TV recovery: the image u (2-D array), the split
    variable w, the gradient multiplier upsilon and the measurement
    multiplier lam, plus the penalties and tolerances they are run with.
    """

    def __init__(self,
            u: np.ndarray,
            w: GradientField,
            upsilon: GradientField,
            lam: np.ndarray,
            params: TvParams,
            ) -> None:
        self.u = u
        self.w = w
        self.upsilon = upsilon
        self.lam = lam

        self.beta = params.beta
        self.mu = params.mu
        self.inner_tol = params.inner_tol
        self.outer_tol = params.outer_tol

    @classmethod
    def initial(cls,
            b: np.ndarray,
            ops: Operators,
            params: TvParams,
            ) -> "TvSolverState":
        """
        u_0 = A^T b, w_0 = D u_0 and both multipliers zero.
        """

        u = ops.adjoint(b)
        return cls(u, ops.gradient(u), GradientField.zeros(ops.shape),
                np.zeros_like(b), params)

    def is_finite(self) -> bool:
        return (bool(np.all(np.isfinite(self.u)))
                and self.w.is_finite()
                and self.upsilon.is_finite()
                and bool(np.all(np.isfinite(self.lam))))

def shrink_w(du: GradientField, upsilon: GradientField, beta: float) -> GradientField:
    """
    Exact minimizer of ||w||_2 - upsilon^T (Du - w) + beta/2 ||Du - w||^2,
    pixel by pixel:

    v = Du - upsilon / beta
    w = max(||v|| - 1/beta, 0) * v / ||v||

    with w = 0 wherever v = 0.
    """

    v = du - upsilon / beta
    r = np.sqrt(v.dx * v.dx + v.dy * v.dy)

    scale = np.zeros_like(r)
    np.divide(np.maximum(r - 1.0 / beta, 0.0), r, out=scale, where=r > 0)
    return GradientField(scale * v.dx, scale * v.dy)

def bb_direction(
        u: np.ndarray,
        w_next: GradientField,
        upsilon: GradientField,
        lam: np.ndarray,
        b: np.ndarray,
        beta: float,
        mu: float,
        ops: Operators,
        ) -> np.ndarray:
    """
    Gradient of the u-subproblem:

    d = beta D^T (Du - w) - D^T upsilon + mu A^T (Au - b) - A^T lam
    """

    du = ops.gradient(u)
    residual = ops.forward(u) - b

    d = beta * ops.gradient_adjoint(du - w_next)
    d -= ops.gradient_adjoint(upsilon)
    d += mu * ops.adjoint(residual)
    d -= ops.adjoint(lam)
    return d

def bb_step_size(d: np.ndarray, beta: float, mu: float, ops: Operators) -> float:
    """
    eta = <d, d> / <d, G d> with G = mu A^T A + beta D^T D.

    <d, G d> is evaluated as mu ||A d||^2 + beta ||D d||^2. Returns 0 if d is
    zero (the inner loop has converged) or lies in the null space of G.
    """

    dd = float(np.vdot(d, d))
    if dd == 0:
        return 0.0

    ad = ops.forward(d)
    dgd = mu * float(np.vdot(ad, ad)) + beta * ops.gradient(d).inner(ops.gradient(d))
    if dgd <= 0:
        logger.warning("Descent direction lies in the null space of G")
        return 0.0
    return dd / dgd

def augmented_lagrangian(
        u: np.ndarray,
        w: GradientField,
        upsilon: GradientField,
        lam: np.ndarray,
        b: np.ndarray,
        beta: float,
        mu: float,
        ops: Operators,
        ) -> float:
    """
    sum ||w||_2 - upsilon^T (Du - w) + beta/2 ||Du - w||^2
        - lam^T (Au - b) + mu/2 ||Au - b||^2
    """

    r = ops.gradient(u) - w
    e = ops.forward(u) - b

    magnitude = np.sqrt(w.dx * w.dx + w.dy * w.dy)
    return (float(magnitude.sum())
            - upsilon.inner(r)
            + beta / 2 * r.inner(r)
            - float(np.vdot(lam, e))
            + mu / 2 * float(np.vdot(e, e)))

def solve_mbtv_nllm(
        b: MeasurementSet,
        op: BlockSensingOperator,
        geom: BlockGeometry,
        params: Optional[TvParams] = None,
        reference: Optional[Image] = None,
        events: Optional[Events] = None,
        ) -> Tuple[Image, ConvergenceTrace]:
    """
    Recover an image from block measurements by multi-block TV with the
    nonlocal (NLM-denoised) Lagrangian multiplier.

    The outer loop alternates an inner loop (shrinkage of w, then one
    Barzilai-Borwein descent step on u, until the inner relative change drops
    below inner_tol) with the multiplier updates. It stops once the outer
    relative change drops below outer_tol or after max_outer iterations; in
    the latter case the iterate with the smallest misfit is returned and the
    trace is flagged as not converged.

    The iterates live on intensities divided by Image.PEAK, the scale beta
    and mu are tuned for. The returned image is scaled back to [0, 255]. The
    trace's misfit and PSNR are in intensity units, its objective is the
    augmented Lagrangian of the scaled problem.

    If reference is given, the trace records the PSNR against it.

    Raises DivergenceError if an iterate becomes non-finite.
    """

    if params is None:
        params = TvParams()
    if events is None:
        events = Events()

    b.check(op, geom)
    ops = Operators(op, geom, params.scope(geom))
    bvec = b.vector / Image.PEAK
    beta, mu = params.beta, params.mu

    name = "mbtv-nllm" if params.use_nllm else "mbtv"
    trace = ConvergenceTrace(name)

    if not np.any(bvec):
        logger.info("All measurements are zero, returning the zero image")
        trace.converged = True
        events.fire("finished", trace)
        return Image.zeros(geom.height, geom.width), trace

    logger.info((f"Starting {name} recovery of a {geom.height}x{geom.width}"
            f" frame at subrate {b.subrate:.4g} ({ops.scope!r})"))
    started = time.perf_counter()

    state = TvSolverState.initial(bvec, ops, params)
    best_u, best_misfit = state.u, np.inf

    for k in range(1, params.max_outer + 1):
        u_outer = state.u

        for _ in range(params.max_inner):
            state.w = shrink_w(ops.gradient(state.u), state.upsilon, beta)
            d = bb_direction(state.u, state.w, state.upsilon, state.lam, bvec,
                    beta, mu, ops)
            eta = bb_step_size(d, beta, mu, ops)
            if eta == 0:
                break

            u_next = state.u - eta * d
            if not np.all(np.isfinite(u_next)):
                raise DivergenceError(k)

            inner_change = relative_change(state.u, u_next)
            state.u = u_next
            trace.inner_iterations += 1
            if inner_change <= params.inner_tol:
                break

        if params.use_nllm:
            state.upsilon = update_multiplier_nllm(state.upsilon, state.u,
                    state.w, beta, params.nlm, ops.scope)
        else:
            state.upsilon = state.upsilon - beta * (ops.gradient(state.u) - state.w)
        state.lam = state.lam - mu * (ops.forward(state.u) - bvec)

        if not state.is_finite():
            raise DivergenceError(k)

        misfit = Image.PEAK * float(np.linalg.norm(ops.forward(state.u) - bvec))
        if misfit < best_misfit:
            best_u, best_misfit = state.u, misfit

        outer_change = relative_change(u_outer, state.u)
        u_pixels = Image.PEAK * state.u
        record = IterationRecord(
                iteration=k,
                objective=augmented_lagrangian(state.u, state.w, state.upsilon,
                    state.lam, bvec, beta, mu, ops),
                misfit=misfit,
                rel_change=outer_change,
                step_change=step_change(u_outer, state.u),
                psnr=psnr(reference, u_pixels) if reference is not None else None,
                mse=mse(reference, u_pixels) if reference is not None else None,
        )
        trace.append(record)
        events.fire("iteration", record)
        logger.debug(f"{name} {record!r}")

        if outer_change <= params.outer_tol:
            trace.converged = True
            break

    elapsed = datetime.timedelta(seconds=time.perf_counter() - started)
    n = trace.iterations
    if trace.converged:
        logger.info((f"{name} converged after {n} iteration{plural(n)}"
                f" ({format_delta(elapsed)})"))
        result = state.u
    else:
        logger.warning((f"{name} stopped after {n} iteration{plural(n)}"
                f" without converging, keeping the iterate with misfit"
                f" {best_misfit:.4g} ({format_delta(elapsed)})"))
        result = best_u

    events.fire("finished", trace)
    return Image(Image.PEAK * result), trace
