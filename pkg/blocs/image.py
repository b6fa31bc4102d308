import logging
from typing import Union

import numpy as np

from .exceptions import *

logger = logging.getLogger(__name__)

__all__ = ["Image", "ImageLike", "pixels_of", "BlockGeometry",
        "partition_blocks", "assemble_blocks"]

class Image:
    """
    A 2-D grid of real intensities, nominally in [0, 255].

    The pixels are stored as a read-only float64 array. Intensities stay real
    throughout the pipeline; they are only clamped and rounded when written to
    an 8-bit file (see quantized()).
    """

    PEAK = 255.0

    def __init__(self, pixels: np.ndarray) -> None:
        array = np.array(pixels, dtype=np.float64)

        if array.ndim != 2 or array.size == 0:
            raise GeometryError(("an image needs a non-empty 2-D pixel array,"
                    f" got shape {array.shape}"))
        if not np.all(np.isfinite(array)):
            raise DegenerateInputError("image contains non-finite pixels")

        array.setflags(write=False)
        self._pixels = array

    @classmethod
    def from_vector(cls,
            vector: np.ndarray,
            height: int,
            width: int,
            ) -> "Image":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != height * width:
            raise GeometryError((f"vector of length {vector.size} can't be a"
                    f" {height}x{width} image"))
        return cls(vector.reshape(height, width))

    @classmethod
    def zeros(cls, height: int, width: int) -> "Image":
        return cls(np.zeros((height, width)))

    # Attributes

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def shape(self) -> tuple:
        return self._pixels.shape

    @property
    def size(self) -> int:
        return self._pixels.size

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def data(self) -> np.ndarray:
        """
        The row-major (raster scan) vector of all pixels.
        """

        return self._pixels.ravel()

    # Export helpers

    def clipped(self) -> "Image":
        return Image(np.clip(self._pixels, 0.0, self.PEAK))

    def quantized(self) -> np.ndarray:
        return np.rint(np.clip(self._pixels, 0.0, self.PEAK)).astype(np.uint8)

    def __repr__(self) -> str:
        return f"Image({self.height}x{self.width})"

ImageLike = Union[Image, np.ndarray]

def pixels_of(u: ImageLike) -> np.ndarray:
    """
    Return the 2-D pixel array of an Image, or a 2-D float view of an array.
    """

    if isinstance(u, Image):
        return u.pixels

    array = np.asarray(u, dtype=np.float64)
    if array.ndim != 2:
        raise GeometryError(f"expected a 2-D pixel array, got shape {array.shape}")
    return array

class BlockGeometry:
    """
    The non-overlapping tiling of an image into block_side x block_side
    blocks, grid_rows blocks high and grid_cols blocks wide.

    Images whose dimensions aren't multiples of block_side are rejected, they
    are never padded.
    """

    def __init__(self, block_side: int, grid_rows: int, grid_cols: int) -> None:
        if block_side < 1:
            raise GeometryError(f"block side must be positive, got {block_side}")
        if grid_rows < 1 or grid_cols < 1:
            raise GeometryError(("a block grid needs at least one block, got"
                    f" {grid_rows}x{grid_cols}"))

        self._block_side = block_side
        self._grid_rows = grid_rows
        self._grid_cols = grid_cols

    @classmethod
    def for_shape(cls, height: int, width: int, block_side: int) -> "BlockGeometry":
        if block_side < 1 or height % block_side != 0 or width % block_side != 0:
            raise GeometryError((f"a {height}x{width} image can't be tiled by"
                    f" {block_side}x{block_side} blocks"))
        return cls(block_side, height // block_side, width // block_side)

    @classmethod
    def for_image(cls, img: ImageLike, block_side: int) -> "BlockGeometry":
        height, width = pixels_of(img).shape
        return cls.for_shape(height, width, block_side)

    # Attributes

    @property
    def block_side(self) -> int:
        return self._block_side

    @property
    def grid_rows(self) -> int:
        return self._grid_rows

    @property
    def grid_cols(self) -> int:
        return self._grid_cols

    @property
    def n(self) -> int:
        """
        Number of pixels per block.
        """

        return self._block_side ** 2

    @property
    def count(self) -> int:
        """
        Number of blocks G.
        """

        return self._grid_rows * self._grid_cols

    @property
    def height(self) -> int:
        return self._grid_rows * self._block_side

    @property
    def width(self) -> int:
        return self._grid_cols * self._block_side

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    def check(self, pixels: np.ndarray) -> None:
        if pixels.shape != self.shape:
            raise GeometryError((f"image of shape {pixels.shape} doesn't match"
                    f" the block geometry {self!r}"))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BlockGeometry):
            return NotImplemented
        return (self._block_side, self._grid_rows, self._grid_cols) == \
                (other._block_side, other._grid_rows, other._grid_cols)

    def __repr__(self) -> str:
        return (f"BlockGeometry(block_side={self._block_side},"
                f" grid={self._grid_rows}x{self._grid_cols})")

def partition_blocks(img: ImageLike, geom: BlockGeometry) -> np.ndarray:
    """
    Cut the image into its G blocks.

    Returns a G x n array whose row k is the raster-scan vector of block k.
    Blocks are ordered row-major over the grid.
    """

    pixels = pixels_of(img)
    geom.check(pixels)

    b = geom.block_side
    tiles = pixels.reshape(geom.grid_rows, b, geom.grid_cols, b)
    return tiles.transpose(0, 2, 1, 3).reshape(geom.count, geom.n)

def assemble_blocks(blocks: np.ndarray, geom: BlockGeometry) -> Image:
    """
    The exact inverse of partition_blocks().
    """

    return Image(_assemble_pixels(blocks, geom))

def _assemble_pixels(blocks: np.ndarray, geom: BlockGeometry) -> np.ndarray:
    array = np.asarray(blocks, dtype=np.float64)
    if array.shape != (geom.count, geom.n):
        raise GeometryError((f"expected {geom.count} blocks of length {geom.n},"
                f" got an array of shape {array.shape}"))

    b = geom.block_side
    tiles = array.reshape(geom.grid_rows, geom.grid_cols, b, b)
    return tiles.transpose(0, 2, 1, 3).reshape(geom.height, geom.width)
