import configparser
import csv
import logging
import math
import time
import warnings
from typing import IO, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .events import Events
from .exceptions import *
from .image import BlockGeometry, Image, ImageLike, _assemble_pixels, pixels_of
from .metrics import psnr
from .operators import Operators
from .patches import BOTH, PatchConfig
from .refine import (STILL_METHODS, RefineParams, SideTerm, cst_direction,
                     cst_step_size, recover_still, run_refinement)
from .sensing import (BlockSensingOperator, MeasurementSet,
                      make_gaussian_operator, rows_for_subrate, sense)
from .trace import ConvergenceTrace, format_number
from .tv import TvParams

logger = logging.getLogger(__name__)

__all__ = ["Gop", "split_gops", "SiCandidate", "score_candidates", "select_si",
        "MhParams", "mh_predict", "NonkeyParams", "nonkey_direction",
        "nonkey_step_size", "recover_nonkey", "DcvsConfig", "FrameReport",
        "DcvsResult", "run_dcvs"]

class Gop:
    """
    A group of pictures: the key frame followed by its non-key frames.

    - start - index of the key frame in the whole sequence
    """

    def __init__(self, start: int, frames: List[Image]) -> None:
        if not frames:
            raise DegenerateInputError("a GOP needs at least its key frame")

        self.start = start
        self.frames = frames

    @property
    def key(self) -> Image:
        return self.frames[0]

    @property
    def indices(self) -> List[int]:
        return list(range(self.start, self.start + len(self.frames)))

    def is_key(self, index: int) -> bool:
        return index == self.start

    def __repr__(self) -> str:
        return f"Gop(start={self.start}, frames={len(self.frames)})"

def split_gops(sequence: Sequence[Image], gop_size: int) -> List[Gop]:
    """
    Frame i is a key frame iff i % gop_size == 0. The last GOP may be short.
    """

    if gop_size < 2:
        raise ConfigError(f"GOP size must be >= 2, got {gop_size}")

    return [Gop(start, list(sequence[start:start + gop_size]))
            for start in range(0, len(sequence), gop_size)]

# Side information

class SiCandidate:
    def __init__(self, frame: Image, score: float) -> None:
        if not (score >= 0 and math.isfinite(score)):
            raise DegenerateInputError(f"invalid side information score {score}")

        self.frame = frame
        self.score = score

    def __repr__(self) -> str:
        return f"SiCandidate(score={self.score:.6g})"

def score_candidates(
        b: MeasurementSet,
        candidates: Sequence[ImageLike],
        op: BlockSensingOperator,
        geom: BlockGeometry,
        ) -> List[SiCandidate]:
    """
    Score every candidate frame by ||b_NK - A_NK u||_2.
    """

    b.check(op, geom)
    ops = Operators(op, geom)
    scored = []
    for candidate in candidates:
        frame = candidate if isinstance(candidate, Image) else Image(candidate)
        score = float(np.linalg.norm(b.vector - ops.forward(frame.pixels)))
        scored.append(SiCandidate(frame, score))
    return scored

def select_si(
        b: MeasurementSet,
        candidates: Sequence[ImageLike],
        op: BlockSensingOperator,
        geom: BlockGeometry,
        tau2: float = 2.0,
        ) -> Image:
    """
    Pick the initial side information of a non-key frame in the measurement
    domain.

    Candidates scoring at most tau2 * sqrt(len(b)) are averaged, as long as
    their scores are not spread further apart than that same threshold.
    Otherwise the candidate with the lowest score wins (the first one on
    ties).
    """

    if not candidates:
        raise DegenerateInputError("no side information candidates")

    scored = score_candidates(b, candidates, op, geom)
    threshold = tau2 * math.sqrt(b.length)

    inside = [c for c in scored if c.score <= threshold]
    if inside:
        scores = [c.score for c in inside]
        if max(scores) - min(scores) <= threshold:
            logger.debug(f"Averaging {len(inside)} side information candidates")
            if len(inside) == 1:
                return inside[0].frame
            return Image(np.mean([c.frame.pixels for c in inside], axis=0))

    best = min(scored, key=lambda c: c.score)
    logger.debug(f"Using the best side information candidate {best!r}")
    return best.frame

# Multi-hypothesis prediction

class MhParams:
    """
    - block_side - prediction block side, None to use the sensing blocks
    - search_radius - hypotheses are all blocks of the reference frame within
      this many pixels of the co-located block
    - tikhonov_weight - weight of the distance-weighted Tikhonov term
    """

    def __init__(self,
            block_side: Optional[int] = None,
            search_radius: int = 7,
            tikhonov_weight: float = 0.25,
            ) -> None:
        if search_radius < 0:
            raise ConfigError(f"search radius must be >= 0, got {search_radius}")
        if tikhonov_weight < 0:
            raise ConfigError(f"Tikhonov weight must be >= 0, got {tikhonov_weight}")

        self.block_side = block_side
        self.search_radius = search_radius
        self.tikhonov_weight = tikhonov_weight

    @classmethod
    def from_section(cls, section: configparser.SectionProxy) -> "MhParams":
        return cls(
                block_side=section.getint("mh_block_side", None),
                search_radius=section.getint("search_radius", 7),
                tikhonov_weight=section.getfloat("tikhonov_weight", 0.25),
        )

def _offsets(start: int, radius: int, limit: int) -> np.ndarray:
    return np.arange(max(0, start - radius), min(limit, start + radius) + 1)

def _hypothesis_weights(
        projected: np.ndarray,
        target: np.ndarray,
        weight: float,
        ) -> Optional[np.ndarray]:
    """
    argmin ||target - Q^T w||^2 + weight^2 ||Gamma w||^2 with Q the K x m
    projected hypotheses and Gamma = diag(||target - q_j||). Returns None if
    the system is singular or too ill-conditioned to be solved.
    """

    if weight == 0:
        w, *_ = np.linalg.lstsq(projected.T, target, rcond=None)
        return w

    distances = np.linalg.norm(projected - target, axis=1)
    system = projected @ projected.T + np.diag((weight * distances) ** 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            w = scipy.linalg.solve(system, projected @ target, assume_a="sym")
        except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
            return None
    if not np.all(np.isfinite(w)):
        return None
    return w

def _as_frames(references: Union[ImageLike, Sequence[ImageLike]]) -> List[np.ndarray]:
    if isinstance(references, (Image, np.ndarray)):
        return [pixels_of(references)]
    return [pixels_of(r) for r in references]

def mh_predict(
        references: Union[ImageLike, Sequence[ImageLike]],
        b: MeasurementSet,
        op: BlockSensingOperator,
        geom: BlockGeometry,
        params: Optional[MhParams] = None,
        ) -> Image:
    """
    Predict every block of a frame as a Tikhonov-regularized combination of
    displaced blocks of one or more reference frames, with the combination
    weights fit to the block's measurements.

    The hypotheses of a block are all blocks within search_radius of its
    position, taken from every reference frame in turn.
    """

    if params is None:
        params = MhParams()
    if params.block_side is not None and params.block_side != geom.block_side:
        raise GeometryError((f"prediction blocks of side {params.block_side}"
                f" don't match the sensing blocks {geom!r}"))

    b.check(op, geom)
    frames = _as_frames(references)
    if not frames:
        raise DegenerateInputError("no reference frames to predict from")
    for frame in frames:
        geom.check(frame)

    side = geom.block_side
    radius = params.search_radius
    windows = [np.lib.stride_tricks.sliding_window_view(frame, (side, side))
            for frame in frames]
    last_row = geom.height - side
    last_col = geom.width - side

    predicted = np.empty((geom.count, geom.n))
    fallbacks = 0
    for k in range(geom.count):
        row = (k // geom.grid_cols) * side
        col = (k % geom.grid_cols) * side

        rows = _offsets(row, radius, last_row)
        cols = _offsets(col, radius, last_col)
        hypotheses = np.concatenate([w[rows][:, cols].reshape(-1, geom.n)
                for w in windows])
        projected = hypotheses @ op.entries.T
        target = b.per_block[k]

        w = _hypothesis_weights(projected, target, params.tikhonov_weight)
        if w is None:
            fallbacks += 1
            nearest = int(np.argmin(np.linalg.norm(projected - target, axis=1)))
            predicted[k] = hypotheses[nearest]
        else:
            predicted[k] = hypotheses.T @ w

    if fallbacks:
        logger.warning((f"Multi-hypothesis prediction fell back to the nearest"
                f" hypothesis in {fallbacks} of {geom.count} blocks"))
    return Image(_assemble_pixels(predicted, geom))

# Non-key recovery

class NonkeyParams:
    """
    - mu2, mu3 - penalties of the sparse representation and of the side
      information regularization
    - refresh_period - the side information is re-predicted every
      refresh_period iterations
    """

    def __init__(self,
            mu2: float = 0.0025,
            mu3: float = 0.055,
            max_iter: int = 30,
            tol: float = 1e-5,
            refresh_period: int = 1,
            patches: Optional[PatchConfig] = None,
            mh: Optional[MhParams] = None,
            ) -> None:
        if not mu2 > 0:
            raise ConfigError(f"mu2 must be positive, got {mu2}")
        if mu3 < 0:
            raise ConfigError(f"mu3 must be >= 0, got {mu3}")
        if refresh_period < 1:
            raise ConfigError(f"refresh period must be >= 1, got {refresh_period}")

        self.mu2 = mu2
        self.mu3 = mu3
        self.max_iter = max_iter
        self.tol = tol
        self.refresh_period = refresh_period
        self.patches = patches if patches is not None else PatchConfig()
        self.mh = mh if mh is not None else MhParams()

    @classmethod
    def from_section(cls,
            section: configparser.SectionProxy,
            patches: Optional[PatchConfig] = None,
            ) -> "NonkeyParams":
        return cls(
                mu2=section.getfloat("mu2", 0.0025),
                mu3=section.getfloat("mu3", 0.055),
                max_iter=section.getint("max_iter", 30),
                tol=section.getfloat("tol", 1e-5),
                refresh_period=section.getint("refresh_period", 1),
                patches=patches,
                mh=MhParams.from_section(section),
        )

    def refine_params(self) -> RefineParams:
        return RefineParams(self.mu2, self.max_iter, self.tol, self.patches)

def nonkey_direction(
        u: np.ndarray,
        synthesized: np.ndarray,
        lambda2: np.ndarray,
        u_si: np.ndarray,
        lambda3: np.ndarray,
        b: np.ndarray,
        mu2: float,
        mu3: float,
        ops: Operators,
        ) -> np.ndarray:
    """
    d = mu2 (u - Phi(alpha) - lambda_2) + mu3 (u - u_SI - lambda_3)
        - A^T (b - A u)
    """

    return (cst_direction(u, synthesized, lambda2, b, mu2, ops)
            + mu3 * (u - u_si - lambda3))

def nonkey_step_size(d: np.ndarray, mu2: float, mu3: float, ops: Operators) -> float:
    """
    eta = <d, d> / <d, G d> with G = A^T A + (mu2 + mu3) I.
    """

    return cst_step_size(d, mu2 + mu3, ops)

def recover_nonkey(
        b: MeasurementSet,
        op: BlockSensingOperator,
        geom: BlockGeometry,
        u_si_init: ImageLike,
        params: Optional[NonkeyParams] = None,
        tau_hard: Optional[float] = None,
        reference: Optional[Image] = None,
        events: Optional[Events] = None,
        gop_frames: Optional[Sequence[ImageLike]] = None,
        ) -> Tuple[Image, ConvergenceTrace]:
    """
    Recover a non-key frame starting from its initial side information.

    Every refresh_period-th iteration first re-predicts the side information
    by multi-hypothesis prediction against b. The hypotheses come from
    gop_frames, the frames already recovered in the GOP, and from the
    current iterate. Then the combined local and global sparse
    representation and one descent step on u run. With mu3 = 0 the side
    information is ignored and this is plain CST refinement.
    """

    if params is None:
        params = NonkeyParams()

    mh = params.mh
    frames = [pixels_of(f) for f in gop_frames] if gop_frames else []
    def refresh(u: np.ndarray) -> np.ndarray:
        return mh_predict(frames + [u], b, op, geom, mh).pixels

    side = SideTerm(params.mu3, u_si_init, refresh, params.refresh_period)
    return run_refinement(u_si_init, b, op, geom, BOTH, params.refine_params(),
            tau_hard=tau_hard, side=side, reference=reference, events=events,
            name="nonkey")

# Sequences

class DcvsConfig:
    def __init__(self,
            gop_size: int = 2,
            key_subrate: float = 0.7,
            nonkey_subrate: float = 0.1,
            block_side: int = 16,
            tau2: float = 2.0,
            seed: int = 0,
            key_method: str = "cst",
            tv: Optional[TvParams] = None,
            refine: Optional[RefineParams] = None,
            nonkey: Optional[NonkeyParams] = None,
            ) -> None:
        if gop_size < 2:
            raise ConfigError(f"GOP size must be >= 2, got {gop_size}")
        for subrate in [key_subrate, nonkey_subrate]:
            if not 0 < subrate <= 1:
                raise ConfigError(f"subrate must be in (0, 1], got {subrate}")
        if tau2 < 0:
            raise ConfigError(f"tau2 must be >= 0, got {tau2}")
        if key_method.lower() not in STILL_METHODS:
            raise ConfigError((f"key frames can't be recovered with {key_method!r},"
                    f" use one of {', '.join(STILL_METHODS)}"))

        self.gop_size = gop_size
        self.key_subrate = key_subrate
        self.nonkey_subrate = nonkey_subrate
        self.block_side = block_side
        self.tau2 = tau2
        self.seed = seed
        self.key_method = key_method.lower()
        self.tv = tv if tv is not None else TvParams()
        self.refine = refine if refine is not None else RefineParams()
        self.nonkey = nonkey if nonkey is not None else NonkeyParams()

    @classmethod
    def from_section(cls,
            section: configparser.SectionProxy,
            tv: Optional[TvParams] = None,
            refine: Optional[RefineParams] = None,
            patches: Optional[PatchConfig] = None,
            ) -> "DcvsConfig":
        return cls(
                gop_size=section.getint("gop_size", 2),
                key_subrate=section.getfloat("key_subrate", 0.7),
                nonkey_subrate=section.getfloat("nonkey_subrate", 0.1),
                block_side=section.getint("block_side", 16),
                tau2=section.getfloat("tau2", 2.0),
                seed=section.getint("seed", 0),
                key_method=section.get("key_method", "cst"),
                tv=tv,
                refine=refine,
                nonkey=NonkeyParams.from_section(section, patches),
        )

class FrameReport:
    CSV_HEADER = ["frame", "type", "subrate", "psnr", "iterations", "wall_time"]

    def __init__(self,
            frame: int,
            kind: str,
            subrate: float,
            psnr: float,
            iterations: int,
            wall_time: float,
            ) -> None:
        self.frame = frame
        self.kind = kind
        self.subrate = subrate
        self.psnr = psnr
        self.iterations = iterations
        self.wall_time = wall_time

    def row(self) -> List[str]:
        return [str(self.frame), self.kind, format_number(self.subrate),
                format_number(self.psnr), str(self.iterations),
                format_number(self.wall_time)]

class DcvsResult:
    def __init__(self, frames: List[Image], report: List[FrameReport]) -> None:
        self.frames = frames
        self.report = report

    def key_frames(self) -> List[FrameReport]:
        return [r for r in self.report if r.kind == "key"]

    def nonkey_frames(self) -> List[FrameReport]:
        return [r for r in self.report if r.kind == "nonkey"]

    def write_csv(self, f: IO[str]) -> None:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(FrameReport.CSV_HEADER)
        for report in self.report:
            writer.writerow(report.row())

    def save_csv(self, path: str) -> None:
        logger.info(f"Writing DCVS report to {path!r}")
        with open(path, "w", newline="") as f:
            self.write_csv(f)

def run_dcvs(
        sequence: Sequence[ImageLike],
        config: Optional[DcvsConfig] = None,
        events: Optional[Events] = None,
        ) -> DcvsResult:
    """
    Sense and recover a video sequence GOP by GOP.

    Key frames are sensed at key_subrate and recovered with key_method.
    Each non-key frame is sensed at nonkey_subrate, gets its initial side
    information from the frames already recovered in its GOP and is then
    recovered with recover_nonkey(), predicting from those same frames. PSNRs are measured against the input
    frames.
    """

    if config is None:
        config = DcvsConfig()
    if not sequence:
        raise DegenerateInputError("empty video sequence")

    frames = [f if isinstance(f, Image) else Image(f) for f in sequence]
    geom = BlockGeometry.for_image(frames[0], config.block_side)
    for i, frame in enumerate(frames):
        if frame.shape != frames[0].shape:
            raise GeometryError((f"frame {i} has shape {frame.shape}, expected"
                    f" {frames[0].shape}"))

    n = geom.n
    key_op = make_gaussian_operator(rows_for_subrate(config.key_subrate, n),
            n, config.seed)
    nonkey_op = make_gaussian_operator(rows_for_subrate(config.nonkey_subrate, n),
            n, config.seed + 1)

    gops = split_gops(frames, config.gop_size)
    logger.info((f"Recovering {len(frames)} frames in {len(gops)} GOPs"
            f" (key subrate {key_op.subrate:.4g}, non-key subrate"
            f" {nonkey_op.subrate:.4g})"))

    recovered: List[Image] = []
    report: List[FrameReport] = []
    for gop in gops:
        in_gop: List[Image] = []
        for index, frame in zip(gop.indices, gop.frames):
            started = time.perf_counter()

            if gop.is_key(index):
                b = sense(frame, key_op, geom)
                image, trace = recover_still(config.key_method, b, key_op,
                        geom, config.tv, config.refine, events=events)
                kind, subrate = "key", key_op.subrate
            else:
                b = sense(frame, nonkey_op, geom)
                u_si = select_si(b, in_gop, nonkey_op, geom, config.tau2)
                image, trace = recover_nonkey(b, nonkey_op, geom, u_si,
                        config.nonkey, events=events, gop_frames=in_gop)
                kind, subrate = "nonkey", nonkey_op.subrate

            elapsed = time.perf_counter() - started
            quality = psnr(frame, image)
            logger.info(f"Frame {index} ({kind}) recovered at {quality:.2f} dB")

            in_gop.append(image)
            recovered.append(image)
            report.append(FrameReport(index, kind, subrate, quality,
                    trace.total_iterations, elapsed))

    return DcvsResult(recovered, report)
