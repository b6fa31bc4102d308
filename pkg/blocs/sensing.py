import logging
import math
from typing import Optional

import numpy as np

from .exceptions import *
from .image import (BlockGeometry, Image, ImageLike, _assemble_pixels,
                    partition_blocks, pixels_of)

logger = logging.getLogger(__name__)

__all__ = ["BlockSensingOperator", "MeasurementSet", "make_gaussian_operator",
        "rows_for_subrate", "mutual_coherence", "welch_bound", "sense",
        "apply_frame", "apply_frame_adjoint", "frame_matrix",
        "least_squares_baseline"]

class BlockSensingOperator:
    """
    The m x n block sensing matrix A_B shared by all blocks of a frame.

    The frame-level operator A = diag(A_B, ..., A_B) is never materialized;
    apply_frame() and apply_frame_adjoint() apply it block by block.

    seed is None for operators that weren't drawn by make_gaussian_operator()
    (e. g. an identity matrix in a test) and can therefore not be regenerated.
    """

    def __init__(self, entries: np.ndarray, seed: Optional[int] = None) -> None:
        array = np.array(entries, dtype=np.float64)

        if array.ndim != 2:
            raise DimensionError(f"A_B must be a matrix, got shape {array.shape}")
        rows, cols = array.shape
        if not 1 <= rows <= cols:
            raise DimensionError(f"need 1 <= m <= n, got m={rows}, n={cols}")
        if not np.all(np.isfinite(array)):
            raise DegenerateInputError("A_B contains non-finite entries")

        array.setflags(write=False)
        self._entries = array
        self._seed = seed

    # Attributes

    @property
    def rows(self) -> int:
        return self._entries.shape[0]

    @property
    def cols(self) -> int:
        return self._entries.shape[1]

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def seed(self) -> Optional[int]:
        return self._seed

    @property
    def subrate(self) -> float:
        return self.rows / self.cols

    def __repr__(self) -> str:
        return (f"BlockSensingOperator(m={self.rows}, n={self.cols},"
                f" seed={self._seed})")

class MeasurementSet:
    """
    The per-block measurement vectors b_k, in block raster order.

    The frame measurement vector b is their concatenation [b_1 b_2 ... b_G].
    """

    def __init__(self, per_block: np.ndarray, subrate: float) -> None:
        array = np.array(per_block, dtype=np.float64)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise GeometryError((f"measurements must be a G x m array, got"
                    f" shape {array.shape}"))

        array.setflags(write=False)
        self._per_block = array
        self._subrate = subrate

    @classmethod
    def from_vector(cls,
            vector: np.ndarray,
            count: int,
            subrate: float,
            ) -> "MeasurementSet":
        vector = np.asarray(vector, dtype=np.float64)
        if count < 1 or vector.size % count != 0:
            raise GeometryError((f"can't split {vector.size} measurements into"
                    f" {count} equal blocks"))
        return cls(vector.reshape(count, vector.size // count), subrate)

    # Attributes

    @property
    def per_block(self) -> np.ndarray:
        return self._per_block

    @property
    def vector(self) -> np.ndarray:
        return self._per_block.ravel()

    @property
    def count(self) -> int:
        return self._per_block.shape[0]

    @property
    def block_length(self) -> int:
        return self._per_block.shape[1]

    @property
    def length(self) -> int:
        return self._per_block.size

    @property
    def subrate(self) -> float:
        return self._subrate

    def check(self, op: BlockSensingOperator, geom: BlockGeometry) -> None:
        if self.count != geom.count or self.block_length != op.rows:
            raise GeometryError((f"{self.count} measurement blocks of length"
                    f" {self.block_length} don't match {geom.count} blocks"
                    f" sensed by {op!r}"))

def make_gaussian_operator(m: int, n: int, seed: int) -> BlockSensingOperator:
    """
    Draw an m x n i.i.d. standard normal matrix scaled by 1/sqrt(m).

    The generator is numpy's default_rng seeded with seed, so the same
    (m, n, seed) always yields a bit-identical matrix.
    """

    if not 1 <= m <= n:
        raise DimensionError(f"need 1 <= m <= n, got m={m}, n={n}")

    rng = np.random.default_rng(seed)
    entries = rng.standard_normal((m, n)) / math.sqrt(m)
    return BlockSensingOperator(entries, seed=seed)

def rows_for_subrate(subrate: float, n: int) -> int:
    """
    The number of measurements m = round(subrate * n) per block, at least 1.
    """

    if not 0 < subrate <= 1:
        raise DimensionError(f"subrate must be in (0, 1], got {subrate}")
    return max(1, min(n, int(round(subrate * n))))

def welch_bound(m: int, n: int) -> float:
    """
    Lower bound sqrt((n - m) / (m (n - 1))) on the mutual coherence of any
    m x n matrix. For n >> m it approaches 1 / sqrt(m).
    """

    if n < 2:
        raise DegenerateInputError("the Welch bound needs n >= 2")
    return math.sqrt((n - m) / (m * (n - 1)))

def mutual_coherence(op: BlockSensingOperator) -> float:
    """
    Maximum normalized inner product |<a_i, a_j>| / (||a_i|| ||a_j||) over all
    pairs of distinct columns.
    """

    entries = op.entries
    if op.cols < 2:
        raise DegenerateInputError("mutual coherence needs at least two columns")

    norms = np.linalg.norm(entries, axis=0)
    if np.any(norms == 0):
        zero = int(np.flatnonzero(norms == 0)[0])
        raise DegenerateInputError(f"column {zero} of A_B is zero")

    normalized = entries / norms
    gram = np.abs(normalized.T @ normalized)
    np.fill_diagonal(gram, 0.0)
    return float(min(gram.max(), 1.0))

def _check_operator(op: BlockSensingOperator, geom: BlockGeometry) -> None:
    if op.cols != geom.n:
        raise GeometryError((f"{op!r} senses blocks of {op.cols} pixels but the"
                f" geometry has blocks of {geom.n} pixels"))

def sense(
        img: ImageLike,
        op: BlockSensingOperator,
        geom: BlockGeometry,
        ) -> MeasurementSet:
    """
    Compute b_k = A_B u_k for every block k.
    """

    _check_operator(op, geom)
    blocks = partition_blocks(img, geom)
    return MeasurementSet(blocks @ op.entries.T, op.subrate)

def apply_frame(
        op: BlockSensingOperator,
        geom: BlockGeometry,
        u: np.ndarray,
        ) -> np.ndarray:
    """
    Apply the block-diagonal frame operator A to u.

    u may be a raster-scan vector of length N or a 2-D pixel array. The result
    is the concatenated measurement vector of length G * m.
    """

    _check_operator(op, geom)
    u = np.asarray(u, dtype=np.float64)
    if u.size != geom.height * geom.width:
        raise GeometryError((f"input of size {u.size} doesn't match a"
                f" {geom.height}x{geom.width} frame"))

    blocks = partition_blocks(u.reshape(geom.shape), geom)
    return (blocks @ op.entries.T).ravel()

def apply_frame_adjoint(
        op: BlockSensingOperator,
        geom: BlockGeometry,
        y: np.ndarray,
        ) -> np.ndarray:
    """
    Apply A^T to a measurement vector of length G * m.

    Returns the raster-scan vector of length N.
    """

    _check_operator(op, geom)
    y = np.asarray(y, dtype=np.float64)
    if y.size != geom.count * op.rows:
        raise GeometryError((f"measurement vector of length {y.size} doesn't"
                f" match {geom.count} blocks of {op.rows} measurements"))

    blocks = y.reshape(geom.count, op.rows) @ op.entries
    return _assemble_pixels(blocks, geom).ravel()

def frame_matrix(op: BlockSensingOperator, geom: BlockGeometry) -> np.ndarray:
    """
    Materialize the (G * m) x N frame operator. Only meant for small
    instances, mostly as an oracle for the matrix-free functions.
    """

    size = geom.height * geom.width
    columns = [apply_frame(op, geom, unit) for unit in np.eye(size)]
    return np.column_stack(columns)

def least_squares_baseline(
        b: MeasurementSet,
        op: BlockSensingOperator,
        geom: BlockGeometry,
        ) -> Image:
    """
    The minimum-norm blockwise solution A_B^T (A_B A_B^T)^-1 b_k.
    """

    b.check(op, geom)
    pinv = np.linalg.pinv(op.entries)
    return Image(_assemble_pixels(b.per_block @ pinv.T, geom))
