import os

import numpy as np
import pytest

from blocs import (BlockGeometry, Image, NlmParams, PatchConfig, RefineParams,
                   TvParams)

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)

@pytest.fixture
def piecewise_image() -> Image:
    """
    16x16 piecewise-constant image with edges inside and across blocks.
    """

    pixels = np.full((16, 16), 40.0)
    pixels[:, 8:] = 180.0
    pixels[4:12, 3:13] = 110.0
    return Image(pixels)

@pytest.fixture
def textured_image(rng: np.random.Generator) -> Image:
    y, x = np.mgrid[0:16, 0:16]
    pixels = 128 + 60 * np.sin(x / 2.5) * np.cos(y / 3.0) + rng.normal(0, 4, (16, 16))
    return Image(pixels)

@pytest.fixture
def geom8() -> BlockGeometry:
    return BlockGeometry.for_shape(16, 16, 8)

@pytest.fixture
def small_patches() -> PatchConfig:
    return PatchConfig(patch_side=4, group_size=8, stride=2, search_window=10)

@pytest.fixture
def quick_tv() -> TvParams:
    return TvParams(max_outer=4, max_inner=5, nlm=NlmParams(3, 5, 0.19))

@pytest.fixture
def quick_refine(small_patches: PatchConfig) -> RefineParams:
    return RefineParams(max_iter=3, patches=small_patches)

@pytest.fixture
def test_images() -> str:
    """
    Directory holding the standard 256x256 test images, taken from the
    BLOCS_TEST_IMAGES environment variable.
    """

    path = os.environ.get("BLOCS_TEST_IMAGES")
    if not path or not os.path.isfile(os.path.join(path, "leaves.pgm")):
        pytest.skip("BLOCS_TEST_IMAGES does not point to the test images")
    return path
