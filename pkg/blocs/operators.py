import logging
from typing import Callable, Optional, Tuple

import numpy as np

from .exceptions import *
from .image import BlockGeometry, ImageLike, pixels_of
from .sensing import BlockSensingOperator, apply_frame, apply_frame_adjoint

logger = logging.getLogger(__name__)

__all__ = ["GradientField", "GradientScope", "gradient", "gradient_adjoint",
        "isotropic_magnitude", "total_variation", "seam_energy",
        "gradient_matrix", "Operators"]

class GradientField:
    """
    A horizontal (dx) and vertical (dy) component grid, both shaped like the
    image they were computed from.
    """

    def __init__(self, dx: np.ndarray, dy: np.ndarray) -> None:
        dx = np.asarray(dx, dtype=np.float64)
        dy = np.asarray(dy, dtype=np.float64)
        if dx.ndim != 2 or dx.shape != dy.shape:
            raise GeometryError((f"gradient components must be equally shaped"
                    f" grids, got {dx.shape} and {dy.shape}"))

        self._dx = dx
        self._dy = dy

    @classmethod
    def zeros(cls, shape: Tuple[int, int]) -> "GradientField":
        return cls(np.zeros(shape), np.zeros(shape))

    # Attributes

    @property
    def dx(self) -> np.ndarray:
        return self._dx

    @property
    def dy(self) -> np.ndarray:
        return self._dy

    @property
    def shape(self) -> Tuple[int, int]:
        return self._dx.shape  # type: ignore

    # Arithmetic

    def _check(self, other: "GradientField") -> None:
        if self.shape != other.shape:
            raise GeometryError((f"gradient fields of shape {self.shape} and"
                    f" {other.shape} don't match"))

    def __add__(self, other: "GradientField") -> "GradientField":
        self._check(other)
        return GradientField(self._dx + other._dx, self._dy + other._dy)

    def __sub__(self, other: "GradientField") -> "GradientField":
        self._check(other)
        return GradientField(self._dx - other._dx, self._dy - other._dy)

    def __mul__(self, factor: float) -> "GradientField":
        return GradientField(self._dx * factor, self._dy * factor)

    __rmul__ = __mul__

    def __truediv__(self, factor: float) -> "GradientField":
        return GradientField(self._dx / factor, self._dy / factor)

    def inner(self, other: "GradientField") -> float:
        self._check(other)
        return float(np.vdot(self._dx, other._dx) + np.vdot(self._dy, other._dy))

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "GradientField":
        """
        Apply func to both components independently.
        """

        return GradientField(func(self._dx), func(self._dy))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self._dx)) and np.all(np.isfinite(self._dy)))

class GradientScope:
    """
    Across which block boundaries the gradient is allowed to look.

    - frame: differences everywhere except at the image border
    - per_block: every block is on its own, differences across block seams are
      zero (block independent TV)
    - multi_block: the block grid is covered by span x span super-blocks and
      differences are only cut at super-block seams

    A multi_block scope whose span covers the whole grid is the same as the
    frame scope.
    """

    PER_BLOCK = "per_block"
    MULTI_BLOCK = "multi_block"
    FRAME = "frame"

    MODES = [PER_BLOCK, MULTI_BLOCK, FRAME]

    def __init__(self,
            mode: str,
            block_side: Optional[int] = None,
            span: int = 1,
            ) -> None:
        if mode not in self.MODES:
            raise ConfigError(f"unknown gradient scope {mode!r}")
        if mode != self.FRAME and (block_side is None or block_side < 1):
            raise ConfigError(f"the {mode} scope needs a positive block side")
        if span < 1:
            raise ConfigError(f"the multi-block span must be >= 1, got {span}")

        self._mode = mode
        self._block_side = block_side
        self._span = 1 if mode == self.PER_BLOCK else span

    @classmethod
    def frame(cls) -> "GradientScope":
        return cls(cls.FRAME)

    @classmethod
    def per_block(cls, block_side: int) -> "GradientScope":
        return cls(cls.PER_BLOCK, block_side)

    @classmethod
    def multi_block(cls, block_side: int, span: int) -> "GradientScope":
        return cls(cls.MULTI_BLOCK, block_side, span)

    # Attributes

    @property
    def mode(self) -> str:
        return self._mode

    @property
    def block_side(self) -> Optional[int]:
        return self._block_side

    @property
    def span(self) -> int:
        return self._span

    @property
    def period(self) -> Optional[int]:
        """
        Distance in pixels between two seams at which differences are cut, or
        None if only the image border cuts them.
        """

        if self._mode == self.FRAME or self._block_side is None:
            return None
        return self._block_side * self._span

    def active(self, length: int) -> np.ndarray:
        """
        Boolean mask of the forward differences along an axis of the given
        length that are not cut.
        """

        index = np.arange(length)
        mask = index < length - 1
        period = self.period
        if period is not None:
            mask &= (index + 1) % period != 0
        return mask

    def __repr__(self) -> str:
        if self._mode == self.FRAME:
            return "GradientScope(frame)"
        return (f"GradientScope({self._mode}, block_side={self._block_side},"
                f" span={self._span})")

def gradient(u: ImageLike, scope: GradientScope) -> GradientField:
    """
    Forward differences dx[i,j] = u[i,j+1] - u[i,j] and
    dy[i,j] = u[i+1,j] - u[i,j], zero wherever the scope cuts them.
    """

    pixels = pixels_of(u)
    height, width = pixels.shape

    dx = np.zeros_like(pixels)
    dy = np.zeros_like(pixels)
    dx[:, :-1] = pixels[:, 1:] - pixels[:, :-1]
    dy[:-1, :] = pixels[1:, :] - pixels[:-1, :]

    dx = np.where(scope.active(width)[np.newaxis, :], dx, 0.0)
    dy = np.where(scope.active(height)[:, np.newaxis], dy, 0.0)
    return GradientField(dx, dy)

def gradient_adjoint(g: GradientField, scope: GradientScope) -> np.ndarray:
    """
    D^T g under the same scope as gradient(), as a 2-D pixel array.
    """

    height, width = g.shape
    gx = np.where(scope.active(width)[np.newaxis, :], g.dx, 0.0)
    gy = np.where(scope.active(height)[:, np.newaxis], g.dy, 0.0)

    out = -gx - gy
    out[:, 1:] += gx[:, :-1]
    out[1:, :] += gy[:-1, :]
    return out

def isotropic_magnitude(g: GradientField) -> np.ndarray:
    return np.sqrt(g.dx * g.dx + g.dy * g.dy)

def total_variation(u: ImageLike, scope: GradientScope) -> float:
    return float(isotropic_magnitude(gradient(u, scope)).sum())

def seam_energy(u: ImageLike, block_side: int) -> float:
    """
    Sum of squared forward differences straddling a block seam. Blocking
    artifacts show up as a large seam energy.
    """

    pixels = pixels_of(u)
    height, width = pixels.shape

    cols = np.arange(block_side - 1, width - 1, block_side)
    rows = np.arange(block_side - 1, height - 1, block_side)

    across_cols = pixels[:, cols + 1] - pixels[:, cols]
    across_rows = pixels[rows + 1, :] - pixels[rows, :]
    return float(np.sum(across_cols ** 2) + np.sum(across_rows ** 2))

def gradient_matrix(shape: Tuple[int, int], scope: GradientScope) -> np.ndarray:
    """
    Materialize [D_x; D_y] as a dense 2N x N matrix acting on raster vectors.
    Only meant for small oracle checks.
    """

    size = shape[0] * shape[1]
    columns = []
    for unit in np.eye(size):
        field = gradient(unit.reshape(shape), scope)
        columns.append(np.concatenate([field.dx.ravel(), field.dy.ravel()]))
    return np.column_stack(columns)

class Operators:
    """
    The matrix-free operators a recovery needs: the frame sensing operator A,
    the scoped gradient D and their adjoints.

    Images are passed around as 2-D pixel arrays, measurements as
    concatenated vectors.
    """

    def __init__(self,
            op: BlockSensingOperator,
            geom: BlockGeometry,
            scope: Optional[GradientScope] = None,
            ) -> None:
        self._op = op
        self._geom = geom
        self._scope = scope if scope is not None else GradientScope.frame()

    # Attributes

    @property
    def op(self) -> BlockSensingOperator:
        return self._op

    @property
    def geom(self) -> BlockGeometry:
        return self._geom

    @property
    def scope(self) -> GradientScope:
        return self._scope

    @property
    def shape(self) -> Tuple[int, int]:
        return self._geom.shape  # type: ignore

    # Operators

    def forward(self, u: np.ndarray) -> np.ndarray:
        return apply_frame(self._op, self._geom, u)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return apply_frame_adjoint(self._op, self._geom, y).reshape(self.shape)

    def gradient(self, u: np.ndarray) -> GradientField:
        return gradient(u, self._scope)

    def gradient_adjoint(self, g: GradientField) -> np.ndarray:
        return gradient_adjoint(g, self._scope)
