import math

import numpy as np

from .exceptions import *
from .image import Image, ImageLike, pixels_of

__all__ = ["mse", "psnr"]

def mse(ref: ImageLike, test: ImageLike) -> float:
    a = pixels_of(ref)
    b = pixels_of(test)
    if a.shape != b.shape:
        raise GeometryError(f"can't compare images of shape {a.shape} and {b.shape}")
    return float(np.mean((a - b) ** 2))

def psnr(ref: ImageLike, test: ImageLike) -> float:
    """
    10 log10(255^2 / MSE) in dB. Identical images give math.inf.
    """

    error = mse(ref, test)
    if error == 0:
        return math.inf
    return 10 * math.log10(Image.PEAK ** 2 / error)
