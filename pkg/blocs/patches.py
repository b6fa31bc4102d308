import configparser
import logging
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.fft import dctn, idctn

from .exceptions import *
from .image import Image, ImageLike, pixels_of

logger = logging.getLogger(__name__)

__all__ = ["Position", "PatchConfig", "PatchGroup", "SparseCodeField",
        "PatchIndex", "PatchAggregator", "extract_patches", "aggregate_patches",
        "match_group", "local_basis", "haar_matrix", "global_transform",
        "inverse_global_transform", "hard_threshold", "estimate_noise_sigma",
        "threshold_for", "code_groups", "solve_alpha", "SimilarityBound",
        "similarity_bound", "LOCAL", "GLOBAL", "BOTH"]

Position = Tuple[int, int]

# Sparsifying transforms of the alpha-subproblem
LOCAL = "local"
GLOBAL = "global"
BOTH = "both"
MODES = [LOCAL, GLOBAL, BOTH]

class PatchConfig:
    """
    - patch_side - patches are patch_side x patch_side (s = patch_side^2)
    - group_size - number of patches F stacked into a group
    - stride - distance between neighbouring patch positions
    - search_window - side of the window the group members are collected in
    - tau_hard - fixed hard threshold, or None to derive it from the image
      (tau_factor * estimated noise sigma)
    """

    def __init__(self,
            patch_side: int = 6,
            group_size: int = 60,
            stride: int = 2,
            search_window: int = 30,
            tau_hard: Optional[float] = None,
            tau_factor: float = 2.7,
            ) -> None:
        if patch_side < 1 or group_size < 1:
            raise ConfigError("patch side and group size must be positive")
        if stride < 1:
            raise ConfigError(f"stride must be >= 1, got {stride}")
        if search_window < patch_side:
            raise ConfigError((f"search window {search_window} is smaller than"
                    f" the patch side {patch_side}"))
        if tau_hard is not None and tau_hard < 0:
            raise ConfigError(f"tau_hard must be >= 0, got {tau_hard}")

        self.patch_side = patch_side
        self.group_size = group_size
        self.stride = stride
        self.search_window = search_window
        self.tau_hard = tau_hard
        self.tau_factor = tau_factor

    @classmethod
    def from_section(cls, section: configparser.SectionProxy) -> "PatchConfig":
        tau = section.get("tau_hard")
        return cls(
                patch_side=section.getint("patch_side", 6),
                group_size=section.getint("group_size", 60),
                stride=section.getint("stride", 2),
                search_window=section.getint("search_window", 30),
                tau_hard=float(tau) if tau else None,
                tau_factor=section.getfloat("tau_factor", 2.7),
        )

    @property
    def patch_length(self) -> int:
        return self.patch_side ** 2

    @property
    def haar_length(self) -> int:
        """
        The group axis length padded to a power of 2.
        """

        return 1 << (self.group_size - 1).bit_length()

    def positions(self, length: int) -> np.ndarray:
        """
        Patch offsets along an axis: every stride-th offset, plus the last
        possible one so that the far border is covered too.
        """

        if length < self.patch_side:
            raise DegenerateInputError((f"an axis of length {length} is shorter"
                    f" than the patch side {self.patch_side}"))

        last = length - self.patch_side
        offsets = list(range(0, last + 1, self.stride))
        if offsets[-1] != last:
            offsets.append(last)
        return np.array(offsets)

    def with_tau(self, tau_hard: Optional[float]) -> "PatchConfig":
        return PatchConfig(self.patch_side, self.group_size, self.stride,
                self.search_window, tau_hard, self.tau_factor)

class PatchGroup:
    """
    A reference patch together with its most similar patches.

    - reference - position of the reference patch
    - members - positions of all F members, the reference first
    - data - the s x F matrix of member patches (as columns)
    - basis - orthogonal s x s local transform (local mode only)
    - coefficients - transform coefficients of data
    - padded - True if the search window had fewer than F candidates and the
      best match was repeated to fill the group
    """

    def __init__(self,
            reference: Position,
            members: List[Position],
            data: np.ndarray,
            padded: bool = False,
            ) -> None:
        self.reference = reference
        self.members = members
        self.data = data
        self.padded = padded
        self.basis: Optional[np.ndarray] = None
        self.coefficients: Optional[np.ndarray] = None

    def __repr__(self) -> str:
        return (f"PatchGroup(reference={self.reference},"
                f" size={len(self.members)}, padded={self.padded})")

class PatchIndex:
    """
    All patches of an image at the positions of a PatchConfig, stored as one
    (positions x s) array in raster order, plus the group matching on top.
    """

    def __init__(self, pixels: np.ndarray, cfg: PatchConfig) -> None:
        self._pixels = pixels
        self._cfg = cfg

        height, width = pixels.shape
        self._rows = cfg.positions(height)
        self._cols = cfg.positions(width)

        p = cfg.patch_side
        windows = np.lib.stride_tricks.sliding_window_view(pixels, (p, p))
        selected = windows[self._rows][:, self._cols]
        self._patches = selected.reshape(self.count, cfg.patch_length)

    # Attributes

    @property
    def count(self) -> int:
        return len(self._rows) * len(self._cols)

    @property
    def patches(self) -> np.ndarray:
        return self._patches

    def rows_of(self, indices: np.ndarray) -> np.ndarray:
        return self._rows[np.asarray(indices) // len(self._cols)]

    def cols_of(self, indices: np.ndarray) -> np.ndarray:
        return self._cols[np.asarray(indices) % len(self._cols)]

    def position(self, index: int) -> Position:
        return (int(self.rows_of(index)), int(self.cols_of(index)))

    def index_of(self, position: Position) -> int:
        row, col = position
        ri = np.flatnonzero(self._rows == row)
        ci = np.flatnonzero(self._cols == col)
        if len(ri) == 0 or len(ci) == 0:
            raise GeometryError(f"{position} is not a patch position")
        return int(ri[0]) * len(self._cols) + int(ci[0])

    # Matching

    def _window(self, offsets: np.ndarray, start: int, length: int) -> np.ndarray:
        size = min(self._cfg.search_window, length)
        top = start + self._cfg.patch_side // 2 - size // 2
        top = min(max(top, 0), length - size)

        lo = np.searchsorted(offsets, top, side="left")
        hi = np.searchsorted(offsets, top + size - self._cfg.patch_side,
                side="right")
        return np.arange(lo, hi)

    def candidates(self, index: int) -> np.ndarray:
        """
        Indices of all patches inside the search window of patch index, in
        raster order. The window is centered on the patch and shifted to stay
        inside the image.
        """

        height, width = self._pixels.shape
        row, col = self.position(index)
        ri = self._window(self._rows, row, height)
        ci = self._window(self._cols, col, width)
        return (ri[:, np.newaxis] * len(self._cols) + ci[np.newaxis, :]).ravel()

    def match(self, index: int) -> Tuple[np.ndarray, bool]:
        """
        The reference index followed by the F - 1 candidates with the
        smallest SSD to it. Ties are resolved by raster order. Returns the
        member indices and whether the group had to be padded.
        """

        group_size = self._cfg.group_size

        candidates = self.candidates(index)
        candidates = candidates[candidates != index]
        differences = self._patches[candidates] - self._patches[index]
        ssd = np.einsum("ij,ij->i", differences, differences)
        order = np.argsort(ssd, kind="stable")

        members = np.concatenate([[index], candidates[order[:group_size - 1]]])
        padded = len(members) < group_size
        if padded:
            filler = members[1] if len(members) > 1 else index
            members = np.concatenate([members,
                    np.full(group_size - len(members), filler)])
        return members.astype(np.intp), padded

class PatchAggregator:
    """
    Per-pixel accumulators for putting (possibly overlapping) patches back
    into an image. Every pixel ends up as the plain average of all patch
    values that cover it.
    """

    def __init__(self, shape: Tuple[int, int], patch_side: int) -> None:
        self._shape = shape
        self._patch_side = patch_side
        self._sums = np.zeros(shape[0] * shape[1])
        self._counts = np.zeros(shape[0] * shape[1])

        dr, dc = np.divmod(np.arange(patch_side * patch_side), patch_side)
        self._offsets = dr * shape[1] + dc

    def add(self, rows: np.ndarray, cols: np.ndarray, patches: np.ndarray) -> None:
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        height, width = self._shape
        p = self._patch_side
        if np.any(rows < 0) or np.any(cols < 0) or \
                np.any(rows + p > height) or np.any(cols + p > width):
            raise GeometryError("patch position outside of the image")

        flat = (rows * width + cols)[:, np.newaxis] + self._offsets[np.newaxis, :]
        size = height * width
        self._sums += np.bincount(flat.ravel(), weights=np.ravel(patches),
                minlength=size)
        self._counts += np.bincount(flat.ravel(), minlength=size)

    def result(self) -> np.ndarray:
        if np.any(self._counts == 0):
            missing = int(np.count_nonzero(self._counts == 0))
            raise CoverageError(f"{missing} pixels are not covered by any patch")
        return (self._sums / self._counts).reshape(self._shape)

def extract_patches(u: ImageLike, cfg: PatchConfig) -> List[Tuple[Position, np.ndarray]]:
    """
    All patches at the stride grid positions (plus the bottom/right border
    positions), raster-vectorized, in raster order of their positions.
    """

    index = PatchIndex(pixels_of(u), cfg)
    return [(index.position(i), index.patches[i].copy()) for i in range(index.count)]

def aggregate_patches(
        patches: Sequence[Tuple[Position, np.ndarray]],
        shape: Tuple[int, int],
        ) -> Image:
    """
    Put patches back at their positions, averaging overlapping pixels.

    Raises CoverageError if any pixel is left uncovered.
    """

    if not patches:
        raise CoverageError("no patches to aggregate")

    length = len(patches[0][1])
    side = math.isqrt(length)
    if side * side != length:
        raise GeometryError(f"patch vectors of length {length} aren't square patches")

    aggregator = PatchAggregator(shape, side)
    rows = np.array([position[0] for position, _ in patches])
    cols = np.array([position[1] for position, _ in patches])
    data = np.array([vector for _, vector in patches], dtype=np.float64)
    if data.shape != (len(patches), length):
        raise GeometryError("all patch vectors must have the same length")

    aggregator.add(rows, cols, data)
    return Image(aggregator.result())

def match_group(reference: Position, u: ImageLike, cfg: PatchConfig) -> PatchGroup:
    index = PatchIndex(pixels_of(u), cfg)
    members, padded = index.match(index.index_of(reference))
    if padded:
        logger.warning(f"Group of {reference} padded to {cfg.group_size} patches")

    positions = [index.position(int(m)) for m in members]
    return PatchGroup(reference, positions, index.patches[members].T.copy(), padded)

# Transforms

def _local_bases(data: np.ndarray) -> np.ndarray:
    """
    Local bases for a batch of groups (..., s, F): eigenvectors of the
    uncentered covariance, by descending eigenvalue, with the largest
    magnitude component of each eigenvector made positive.
    """

    covariance = data @ np.swapaxes(data, -1, -2) / data.shape[-1]
    _, vectors = np.linalg.eigh(covariance)
    vectors = vectors[..., ::-1]

    biggest = np.argmax(np.abs(vectors), axis=-2)[..., np.newaxis, :]
    signs = np.sign(np.take_along_axis(vectors, biggest, axis=-2))
    signs[signs == 0] = 1.0
    return vectors * signs

def local_basis(group: PatchGroup) -> np.ndarray:
    basis = _local_bases(np.asarray(group.data, dtype=np.float64))
    group.basis = basis
    return basis

def haar_matrix(length: int) -> np.ndarray:
    """
    The orthonormal Haar matrix of a power-of-2 length (full decomposition).
    """

    if length < 1 or length & (length - 1):
        raise DegenerateInputError(f"Haar length must be a power of 2, got {length}")

    matrix = np.array([[1.0]])
    while matrix.shape[0] < length:
        n = matrix.shape[0]
        top = np.kron(matrix, [1.0, 1.0])
        bottom = np.kron(np.eye(n), [1.0, -1.0])
        matrix = np.vstack([top, bottom]) / math.sqrt(2)
    return matrix

def global_transform(data: np.ndarray, cfg: PatchConfig) -> np.ndarray:
    """
    Separable 3-D transform of groups shaped (..., s, F): an orthonormal 2-D
    DCT-II on every patch, then an orthonormal Haar transform along the group
    axis. The group axis is padded to cfg.haar_length by cycling through the
    members, so the result is shaped (..., s, haar_length).
    """

    data = np.asarray(data, dtype=np.float64)
    p = cfg.patch_side
    size = data.shape[-1]
    length = cfg.haar_length
    lead = data.shape[:-2]

    padded = data[..., np.arange(length) % size]
    cube = np.swapaxes(padded, -1, -2).reshape(*lead, length, p, p)
    spectra = dctn(cube, axes=(-2, -1), norm="ortho").reshape(*lead, length, p * p)
    return np.swapaxes(spectra, -1, -2) @ haar_matrix(length).T

def inverse_global_transform(
        coefficients: np.ndarray,
        cfg: PatchConfig,
        size: Optional[int] = None,
        ) -> np.ndarray:
    """
    Inverse of global_transform(). The padding columns are dropped, leaving
    size (default cfg.group_size) members.
    """

    if size is None:
        size = cfg.group_size
    p = cfg.patch_side
    length = coefficients.shape[-1]
    lead = coefficients.shape[:-2]

    spectra = np.asarray(coefficients, dtype=np.float64) @ haar_matrix(length)
    cube = np.swapaxes(spectra, -1, -2).reshape(*lead, length, p, p)
    pixels = idctn(cube, axes=(-2, -1), norm="ortho").reshape(*lead, length, p * p)
    return np.swapaxes(pixels, -1, -2)[..., :size]

def hard_threshold(coefficients: np.ndarray, tau_hard: float) -> np.ndarray:
    """
    Zero every coefficient with |c| < tau_hard, except the DC coefficients:
    the first entry of a vector, or the first row of a coefficient matrix
    (one DC coefficient per patch).
    """

    if tau_hard < 0:
        raise ConfigError(f"tau_hard must be >= 0, got {tau_hard}")

    coefficients = np.asarray(coefficients, dtype=np.float64)
    out = np.where(np.abs(coefficients) < tau_hard, 0.0, coefficients)
    if coefficients.ndim == 1:
        out[0] = coefficients[0]
    else:
        out[..., 0, :] = coefficients[..., 0, :]
    return out

def estimate_noise_sigma(u: ImageLike) -> float:
    """
    Robust noise estimate 1.4826 * median(|HH|) from the finest diagonal
    band of an orthonormal Haar decomposition.
    """

    pixels = pixels_of(u)
    height = pixels.shape[0] - pixels.shape[0] % 2
    width = pixels.shape[1] - pixels.shape[1] % 2
    if height == 0 or width == 0:
        raise DegenerateInputError("need at least a 2x2 image to estimate noise")

    p = pixels[:height, :width]
    diagonal = (p[0::2, 0::2] - p[0::2, 1::2] - p[1::2, 0::2] + p[1::2, 1::2]) / 2
    return 1.4826 * float(np.median(np.abs(diagonal)))

def threshold_for(u: ImageLike, cfg: PatchConfig) -> float:
    if cfg.tau_hard is not None:
        return cfg.tau_hard
    return cfg.tau_factor * estimate_noise_sigma(u)

def _process_batch(
        data: np.ndarray,
        transform: str,
        cfg: PatchConfig,
        tau_hard: float,
        ) -> Tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    """
    Forward transform, threshold and inverse transform a batch of groups
    (B, s, F). Returns the estimates, the bases (local only) and the
    thresholded coefficients.
    """

    if transform == LOCAL:
        bases = _local_bases(data)
        coefficients = hard_threshold(np.swapaxes(bases, -1, -2) @ data, tau_hard)
        return bases @ coefficients, bases, coefficients

    coefficients = hard_threshold(global_transform(data, cfg), tau_hard)
    estimates = inverse_global_transform(coefficients, cfg, data.shape[-1])
    return estimates, None, coefficients

class SparseCodeField:
    """
    A set of patch groups with their thresholded coefficients, i. e. a
    patch-based sparse representation of an image.
    """

    def __init__(self,
            groups: List[PatchGroup],
            tau_hard: float,
            transform: str,
            cfg: PatchConfig,
            ) -> None:
        self.groups = groups
        self.tau_hard = tau_hard
        self.transform = transform
        self.cfg = cfg

    def synthesize(self, shape: Tuple[int, int]) -> Image:
        """
        Inverse transform every group and aggregate the estimated patches.
        """

        aggregator = PatchAggregator(shape, self.cfg.patch_side)
        for group in self.groups:
            if group.coefficients is None:
                raise DegenerateInputError(f"{group!r} has no coefficients")
            if self.transform == LOCAL:
                if group.basis is None:
                    raise DegenerateInputError(f"{group!r} has no local basis")
                estimates = group.basis @ group.coefficients
            else:
                estimates = inverse_global_transform(group.coefficients,
                        self.cfg, len(group.members))

            rows = np.array([position[0] for position in group.members])
            cols = np.array([position[1] for position in group.members])
            aggregator.add(rows, cols, estimates.T)
        return Image(aggregator.result())

def code_groups(
        u: ImageLike,
        transform: str,
        cfg: PatchConfig,
        tau_hard: float,
        ) -> SparseCodeField:
    """
    Build the full sparse representation of u with one transform (LOCAL or
    GLOBAL), keeping every group in memory. Handy for inspection of small
    images; solve_alpha() does the same thing without keeping the groups.
    """

    if transform not in [LOCAL, GLOBAL]:
        raise ConfigError(f"unknown sparsifying transform {transform!r}")

    pixels = pixels_of(u)
    index = PatchIndex(pixels, cfg)

    groups = []
    for i in range(index.count):
        members, padded = index.match(i)
        data = index.patches[members].T
        _, bases, coefficients = _process_batch(data[np.newaxis], transform,
                cfg, tau_hard)

        group = PatchGroup(index.position(i),
                [index.position(int(m)) for m in members], data.copy(), padded)
        group.basis = bases[0] if bases is not None else None
        group.coefficients = coefficients[0]
        groups.append(group)

    return SparseCodeField(groups, tau_hard, transform, cfg)

BATCH_SIZE = 256

def _sparse_pass(
        pixels: np.ndarray,
        transform: str,
        cfg: PatchConfig,
        tau_hard: float,
        ) -> np.ndarray:
    index = PatchIndex(pixels, cfg)
    aggregator = PatchAggregator(pixels.shape, cfg.patch_side)  # type: ignore
    padded_groups = 0

    for start in range(0, index.count, BATCH_SIZE):
        stop = min(start + BATCH_SIZE, index.count)

        matches = [index.match(i) for i in range(start, stop)]
        members = np.stack([m for m, _ in matches])
        padded_groups += sum(1 for _, padded in matches if padded)

        data = np.swapaxes(index.patches[members], -1, -2)
        estimates, _, _ = _process_batch(data, transform, cfg, tau_hard)

        flat = members.ravel()
        aggregator.add(index.rows_of(flat), index.cols_of(flat),
                np.swapaxes(estimates, -1, -2).reshape(-1, cfg.patch_length))

    if padded_groups:
        logger.warning((f"{padded_groups} of {index.count} patch groups were"
                f" padded to {cfg.group_size} members"))
    return aggregator.result()

def solve_alpha(
        u: ImageLike,
        mode: str,
        cfg: PatchConfig,
        tau_hard: float,
        ) -> Image:
    """
    One round of patch-based sparse representation: group similar patches,
    transform, hard threshold, inverse transform, aggregate.

    mode is LOCAL (per-group PCA basis), GLOBAL (2-D DCT + 1-D Haar) or BOTH
    (a local pass whose output is fed to a global pass). Returns the
    synthesized image.
    """

    if mode not in MODES:
        raise ConfigError(f"unknown sparse representation mode {mode!r}")

    pixels = pixels_of(u)
    if mode == BOTH:
        first = _sparse_pass(pixels, LOCAL, cfg, tau_hard)
        return Image(_sparse_pass(first, GLOBAL, cfg, tau_hard))
    return Image(_sparse_pass(pixels, mode, cfg, tau_hard))

# Diagnostics

class SimilarityBound(NamedTuple):
    """
    Chebyshev lower bound on the probability that the mean absolute error
    ||u - u*||_1 / N lies within epsilon of center = sigma sqrt(2/pi).
    """

    probability: float
    center: float

def similarity_bound(sigma: float, n: int, epsilon: float) -> SimilarityBound:
    """
    1 - (1 - 2/pi) sigma^2 / (N epsilon^2), clamped to [0, 1], for i.i.d.
    N(0, sigma^2) errors on N pixels.
    """

    if not epsilon > 0:
        raise DegenerateInputError(f"epsilon must be positive, got {epsilon}")
    if sigma < 0:
        raise DegenerateInputError(f"sigma must be >= 0, got {sigma}")
    if n < 1:
        raise DegenerateInputError(f"N must be >= 1, got {n}")

    variance = (1 - 2 / math.pi) * sigma ** 2 / n
    probability = min(max(1 - variance / epsilon ** 2, 0.0), 1.0)
    return SimilarityBound(probability, sigma * math.sqrt(2 / math.pi))
