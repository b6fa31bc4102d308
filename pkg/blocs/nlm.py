import configparser
import logging
import math
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter

from .exceptions import *
from .image import ImageLike
from .operators import GradientField, GradientScope, gradient

logger = logging.getLogger(__name__)

__all__ = ["NlmParams", "nlm_denoise", "nlm_denoise_reference",
        "update_multiplier_nllm"]

class NlmParams:
    """
    Parameters of the nonlocal means filter.

    - patch_side - side of the compared patches (odd)
    - search_side - side of the search window around each pixel (odd)
    - smoothing - the relative smoothing parameter; the effective h is
      smoothing * (max - min of the filtered grid) * patch_side
    - gaussian_patch_weights - reserved for a Gaussian-weighted patch
      distance, must stay False
    """

    def __init__(self,
            patch_side: int = 7,
            search_side: int = 13,
            smoothing: float = 0.19,
            gaussian_patch_weights: bool = False,
            ) -> None:
        if patch_side < 1 or patch_side % 2 == 0:
            raise ConfigError(f"NLM patch side must be odd, got {patch_side}")
        if search_side < 1 or search_side % 2 == 0:
            raise ConfigError(f"NLM search side must be odd, got {search_side}")
        if patch_side > search_side:
            raise ConfigError(("NLM patch side must not exceed the search side,"
                    f" got {patch_side} > {search_side}"))
        if not smoothing > 0:
            raise ConfigError(f"NLM smoothing must be positive, got {smoothing}")
        if gaussian_patch_weights:
            raise ConfigError("Gaussian-weighted NLM patch distances are not supported")

        self.patch_side = patch_side
        self.search_side = search_side
        self.smoothing = smoothing
        self.gaussian_patch_weights = gaussian_patch_weights

    @classmethod
    def from_section(cls, section: configparser.SectionProxy) -> "NlmParams":
        return cls(
                patch_side=section.getint("patch_side", 7),
                search_side=section.getint("search_side", 13),
                smoothing=section.getfloat("smoothing", 0.19),
                gaussian_patch_weights=section.getboolean(
                    "gaussian_patch_weights", False),
        )

    def effective_h(self, field: np.ndarray) -> float:
        return self.smoothing * float(field.max() - field.min()) * self.patch_side

def _prepare(field: ImageLike, params: NlmParams) -> np.ndarray:
    array = np.asarray(field, dtype=np.float64)
    if array.ndim != 2:
        raise GeometryError(f"NLM needs a 2-D grid, got shape {array.shape}")

    height, width = array.shape
    if height < params.patch_side or width < params.patch_side:
        raise DegenerateInputError((f"a {height}x{width} grid is smaller than"
                f" the {params.patch_side}x{params.patch_side} NLM patch"))
    return array

def nlm_denoise(field: ImageLike, params: NlmParams) -> np.ndarray:
    """
    Nonlocal means filter with replicate-padded patches.

    Every output pixel is the normalized, weighted average of the pixels q in
    its search window (clipped to the grid), with the weights
    exp(-||P_p - P_q||^2 / h^2) over plain (unweighted) patch differences.
    The pixel itself always takes part with weight 1.

    The result is the same as nlm_denoise_reference(), but each search offset
    is processed for the whole grid at once.
    """

    array = _prepare(field, params)
    height, width = array.shape

    h = params.effective_h(array)
    if h == 0:
        # constant grids are fixed points
        return array.copy()
    h2 = h * h

    pr = params.patch_side // 2
    sr = params.search_side // 2
    pad = pr + sr
    area = params.patch_side ** 2
    padded = np.pad(array, pad, mode="edge")

    # The region holding every reference patch, in padded coordinates
    region_h = height + 2 * pr
    region_w = width + 2 * pr
    reference = padded[sr:sr + region_h, sr:sr + region_w]

    rows = np.arange(height)
    cols = np.arange(width)

    numerator = np.zeros_like(array)
    denominator = np.zeros_like(array)

    for oy in range(-sr, sr + 1):
        row_ok = (rows + oy >= 0) & (rows + oy < height)
        for ox in range(-sr, sr + 1):
            col_ok = (cols + ox >= 0) & (cols + ox < width)

            shifted = padded[sr + oy:sr + oy + region_h,
                    sr + ox:sr + ox + region_w]
            squared = (reference - shifted) ** 2

            # Patch sums of the squared differences, centered on every pixel
            box = uniform_filter(squared, size=params.patch_side, mode="nearest")
            distance = box[pr:pr + height, pr:pr + width] * area

            weight = np.exp(-distance / h2)
            weight *= row_ok[:, np.newaxis] & col_ok[np.newaxis, :]

            center = padded[pad + oy:pad + oy + height, pad + ox:pad + ox + width]
            numerator += weight * center
            denominator += weight

    return numerator / denominator

def nlm_denoise_reference(field: ImageLike, params: NlmParams) -> np.ndarray:
    """
    Straightforward pixel-by-pixel nonlocal means. Very slow, it only exists
    to check nlm_denoise() against.
    """

    array = _prepare(field, params)
    height, width = array.shape

    h = params.effective_h(array)
    if h == 0:
        return array.copy()
    h2 = h * h

    p = params.patch_side
    pr = p // 2
    sr = params.search_side // 2
    padded = np.pad(array, pr, mode="edge")

    out = np.empty_like(array)
    for i in range(height):
        for j in range(width):
            patch = padded[i:i + p, j:j + p]
            numerator = 0.0
            denominator = 0.0
            for qi in range(max(0, i - sr), min(height, i + sr + 1)):
                for qj in range(max(0, j - sr), min(width, j + sr + 1)):
                    other = padded[qi:qi + p, qj:qj + p]
                    weight = math.exp(-float(np.sum((patch - other) ** 2)) / h2)
                    numerator += weight * array[qi, qj]
                    denominator += weight
            out[i, j] = numerator / denominator
    return out

def update_multiplier_nllm(
        upsilon: GradientField,
        u_next: ImageLike,
        w_next: GradientField,
        beta: float,
        params: NlmParams,
        scope: Optional[GradientScope] = None,
        ) -> GradientField:
    """
    The denoised multiplier update:

    Step 1: a = upsilon - beta (D u_next - w_next)
    Step 2: upsilon_next = NLM(a)

    Both gradient components are filtered independently.
    """

    if not beta > 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    if scope is None:
        scope = GradientScope.frame()

    du = gradient(u_next, scope)
    a = upsilon - beta * (du - w_next)
    return a.map(lambda component: nlm_denoise(component, params))
