"""Cell-centered discrete fields on a rectangular box, and pointwise tensor algebra.

Storage layout: spatial axes are always the trailing three array axes, so a
scalar field is (nx, ny, nz), a vector field (3, nx, ny, nz) and a 3x3 tensor
field (3, 3, nx, ny, nz) with entry [i, j] = Q_ij.  Cell centers sit at
(i + 1/2) * h per axis.  All pointwise operations are data-parallel over cells
(plain numpy broadcasting); containers must not be mutated concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import FieldCorruptionError


class FaceBC(Enum):
    """Boundary tag of a pair of opposite box faces along one axis."""

    WALL = "wall"
    PERIODIC = "periodic"


class Stretching(Enum):
    FULL_GRADIENT = "full_gradient"
    COROTATIONAL = "corotational"


class Potential(Enum):
    """Bulk potential family: general (FF), traceless (FZ), trace-projected (M1)."""

    FF = "ff"
    FZ = "fz"
    M1 = "m1"


MIN_CELLS = 4  # centered stencils plus one-sided closures need this many


@dataclass(frozen=True)
class GridSpec:
    """Rectangular box discretization: counts, edge lengths, per-axis face tags.

    A 2D slab is expressed as nz = 1 with periodic z; all z-derivatives are
    then identically zero while tensors remain 3x3.
    """

    nx: int
    ny: int
    nz: int
    lx: float
    ly: float
    lz: float
    bc_x: FaceBC = FaceBC.PERIODIC
    bc_y: FaceBC = FaceBC.PERIODIC
    bc_z: FaceBC = FaceBC.PERIODIC

    def __post_init__(self):
        for name, n, bc in (("nx", self.nx, self.bc_x), ("ny", self.ny, self.bc_y),
                            ("nz", self.nz, self.bc_z)):
            if n != int(n) or n < 1:
                raise ValueError(f"{name} must be a positive integer, got {n}")
            if n < MIN_CELLS and not (name == "nz" and n == 1 and bc is FaceBC.PERIODIC):
                raise ValueError(
                    f"{name} = {n} is below the stencil minimum {MIN_CELLS}"
                    " (only nz = 1 with periodic z is allowed as a slab)")
        for name, l in (("lx", self.lx), ("ly", self.ly), ("lz", self.lz)):
            if not l > 0:
                raise ValueError(f"{name} must be positive, got {l}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def counts(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def lengths(self) -> tuple[float, float, float]:
        return (self.lx, self.ly, self.lz)

    @property
    def bcs(self) -> tuple[FaceBC, FaceBC, FaceBC]:
        return (self.bc_x, self.bc_y, self.bc_z)

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def hz(self) -> float:
        return self.lz / self.nz

    @property
    def spacings(self) -> tuple[float, float, float]:
        return (self.hx, self.hy, self.hz)

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy * self.hz

    @property
    def volume(self) -> float:
        return self.lx * self.ly * self.lz

    def min_spacing(self) -> float:
        """Smallest spacing among resolved axes (n > 1); slab z does not constrain."""
        hs = [h for n, h in zip(self.counts, self.spacings) if n > 1]
        return min(hs) if hs else min(self.spacings)

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.counts[axis]
        h = self.spacings[axis]
        return (np.arange(n) + 0.5) * h

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis_coords(0), self.axis_coords(1),
                           self.axis_coords(2), indexing="ij")


@dataclass(frozen=True)
class ModelParams:
    """Physical constants: viscosity nu, relaxation gamma, elastic epsilon, bulk a, b, c."""

    nu: float
    gamma: float
    epsilon: float
    a: float
    b: float
    c: float

    def __post_init__(self):
        for name in ("nu", "gamma", "epsilon", "c"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be strictly positive, got {v}")


@dataclass(frozen=True)
class VariantConfig:
    """Model-variant switches: stretching form and bulk-potential form.

    m1_theta blends the two trace-removal scalars of the M1 potential
    (theta = 1: quadratic form valid on traceless states; theta = 0: exact
    trace projection of the FF potential).  Ignored unless potential is M1.
    """

    stretching: Stretching = Stretching.COROTATIONAL
    potential: Potential = Potential.FZ
    m1_theta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.m1_theta <= 1.0:
            raise ValueError(f"m1_theta must lie in [0, 1], got {self.m1_theta}")


_COMPONENT_SHAPE = {"scalar": (), "vector": (3,), "tensor": (3, 3)}


class _Field:
    """Shared container behavior; data shape is component_shape + grid.shape."""

    kind = "scalar"
    __slots__ = ("grid", "data")

    def __init__(self, grid: GridSpec, data: np.ndarray | None = None):
        shape = _COMPONENT_SHAPE[self.kind] + grid.shape
        if data is None:
            data = np.zeros(shape)
        else:
            data = np.asarray(data, dtype=float)
            if data.shape != shape:
                raise ValueError(f"{self.kind} field on {grid.shape} grid needs data of"
                                 f" shape {shape}, got {data.shape}")
        self.grid = grid
        self.data = data

    def copy(self):
        return type(self)(self.grid, self.data.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def assert_finite(self, label: str = ""):
        if not self.is_finite():
            what = label or self.kind
            raise FieldCorruptionError(f"{what} field contains non-finite entries")

    def __repr__(self):
        return f"{type(self).__name__}(grid={self.grid.shape})"


class ScalarField(_Field):
    kind = "scalar"


class VectorField(_Field):
    kind = "vector"


class TensorField(_Field):
    kind = "tensor"


def _check_same_grid(a: _Field, b: _Field):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def trace(Q: TensorField) -> ScalarField:
    """Pointwise Q_11 + Q_22 + Q_33."""
    return ScalarField(Q.grid, np.einsum("ii...->...", Q.data))


def transpose(Q: TensorField) -> TensorField:
    return TensorField(Q.grid, np.swapaxes(Q.data, 0, 1))


def sym_part(A: TensorField) -> TensorField:
    return TensorField(A.grid, 0.5 * (A.data + np.swapaxes(A.data, 0, 1)))


def antisym_part(A: TensorField) -> TensorField:
    return TensorField(A.grid, 0.5 * (A.data - np.swapaxes(A.data, 0, 1)))


def double_dot(A: TensorField, B: TensorField) -> ScalarField:
    """Pointwise A : B = sum_ij A_ij B_ij."""
    _check_same_grid(A, B)
    return ScalarField(A.grid, np.einsum("ij...,ij...->...", A.data, B.data))


def frobenius_sq(A: TensorField) -> ScalarField:
    """Pointwise |A|^2 = A : A."""
    return double_dot(A, A)


def matmul(A: TensorField, B: TensorField) -> TensorField:
    """Pointwise matrix product (A B)_ij = A_ik B_kj."""
    _check_same_grid(A, B)
    return TensorField(A.grid, np.einsum("ik...,kj...->ij...", A.data, B.data))


def identity_tensor(grid: GridSpec) -> TensorField:
    data = np.zeros((3, 3) + grid.shape)
    for i in range(3):
        data[i, i] = 1.0
    return TensorField(grid, data)


def constant_tensor(grid: GridSpec, M) -> TensorField:
    """Tensor field equal to the 3x3 matrix M at every cell."""
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {M.shape}")
    return TensorField(grid, np.broadcast_to(M[:, :, None, None, None], (3, 3) + grid.shape).copy())
