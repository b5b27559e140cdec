"""Discrete differential operators and fast linear solves on the box grid.

Second-order centered stencils with one-layer ghost closures per axis:
periodic wrap, Neumann mirror (ghost = mirror), or homogeneous Dirichlet
(ghost = -mirror, zeroing the face-interpolated value).  Velocity uses the
Dirichlet closure on wall faces, pressure and the order tensor use Neumann.

Linear solves are direct diagonalizations: each axis is diagonalized by its
matching trigonometric transform (FFT / DCT-II / DST-II), so any mix of
periodic and wall axes is handled in one pass.  A conjugate-gradient fallback
is provided for cross-checking.  The pressure projection solves the operator
actually composed by the centered divergence and gradient (a double-width
stencil), which makes the post-projection divergence vanish to rounding.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.fft as _fft
import scipy.sparse.linalg as _sla

from .errors import SolverDivergedError
from .fields import (FaceBC, GridSpec, ScalarField, TensorField, VectorField,
                     _Field)

_workers: int | None = None


def set_num_threads(n: int | None):
    """Worker count for the trigonometric transforms (None = scipy default)."""
    global _workers
    _workers = n


def get_num_threads() -> int | None:
    return _workers


class BCKind(Enum):
    DIRICHLET_ZERO = "dirichlet_zero"
    NEUMANN_ZERO = "neumann_zero"
    PERIODIC = "periodic"


class FieldRole(Enum):
    """Which physical unknown a field holds; fixes its wall closure."""

    VELOCITY = "velocity"      # no-slip walls -> DirichletZero
    PRESSURE = "pressure"      # projection closure -> NeumannZero
    Q_TENSOR = "q_tensor"      # natural boundary condition -> NeumannZero


_WALL_KIND = {
    FieldRole.VELOCITY: BCKind.DIRICHLET_ZERO,
    FieldRole.PRESSURE: BCKind.NEUMANN_ZERO,
    FieldRole.Q_TENSOR: BCKind.NEUMANN_ZERO,
}


def role_bcs(grid: GridSpec, role: FieldRole) -> tuple[BCKind, BCKind, BCKind]:
    """Total (role, axis) -> BCKind map for one grid."""
    return tuple(
        BCKind.PERIODIC if bc is FaceBC.PERIODIC else _WALL_KIND[role]
        for bc in grid.bcs
    )


def _resolve_bcs(grid: GridSpec, role) -> tuple[BCKind, BCKind, BCKind]:
    if isinstance(role, FieldRole):
        return role_bcs(grid, role)
    bcs = tuple(role)
    if len(bcs) != 3 or not all(isinstance(b, BCKind) for b in bcs):
        raise TypeError("role must be a FieldRole or a 3-tuple of BCKind")
    return bcs


# ---------------------------------------------------------------------------
# stencil kernels (arrays with spatial axes trailing)

def _sl(arr, axis, sl):
    idx = [slice(None)] * arr.ndim
    idx[arr.ndim - 3 + axis] = sl
    return arr[tuple(idx)]


def _pad1(arr: np.ndarray, axis: int, bc: BCKind) -> np.ndarray:
    """Attach one ghost layer on both ends of a spatial axis."""
    first, last = _sl(arr, axis, slice(0, 1)), _sl(arr, axis, slice(-1, None))
    if bc is BCKind.PERIODIC:
        left, right = last, first
    elif bc is BCKind.NEUMANN_ZERO:
        left, right = first, last
    else:
        left, right = -first, -last
    return np.concatenate([left, arr, right], axis=arr.ndim - 3 + axis)


def _diff1(arr, axis, h, bc):
    p = _pad1(arr, axis, bc)
    return (_sl(p, axis, slice(2, None)) - _sl(p, axis, slice(None, -2))) / (2.0 * h)


def _diff1_upwind(arr, axis, h, bc, velocity):
    p = _pad1(arr, axis, bc)
    backward = (_sl(p, axis, slice(1, -1)) - _sl(p, axis, slice(None, -2))) / h
    forward = (_sl(p, axis, slice(2, None)) - _sl(p, axis, slice(1, -1))) / h
    return np.where(velocity > 0.0, backward, forward)


def _diff2(arr, axis, h, bc):
    p = _pad1(arr, axis, bc)
    return (_sl(p, axis, slice(2, None)) - 2.0 * arr
            + _sl(p, axis, slice(None, -2))) / (h * h)


def _laplacian_data(arr, grid, bcs):
    out = np.zeros_like(arr)
    for axis in range(3):
        if grid.counts[axis] == 1:
            continue  # slab axis: second difference vanishes identically
        out += _diff2(arr, axis, grid.spacings[axis], bcs[axis])
    return out


# ---------------------------------------------------------------------------
# differential operators on fields

def gradient(f: ScalarField, role) -> VectorField:
    """Centered gradient of a scalar; component k is the derivative along axis k."""
    grid = f.grid
    bcs = _resolve_bcs(grid, role)
    out = np.empty((3,) + grid.shape)
    for axis in range(3):
        out[axis] = _diff1(f.data, axis, grid.spacings[axis], bcs[axis])
    return VectorField(grid, out)


def vector_gradient(u: VectorField, role) -> TensorField:
    """Velocity-gradient tensor with the project-wide convention (grad u)_ij = d_j u_i."""
    grid = u.grid
    bcs = _resolve_bcs(grid, role)
    out = np.empty((3, 3) + grid.shape)
    for j in range(3):
        out[:, j] = _diff1(u.data, j, grid.spacings[j], bcs[j])
    return TensorField(grid, out)


def tensor_gradient(Q: TensorField, role) -> np.ndarray:
    """All first derivatives of a tensor: result[d, i, j] = d_d Q_ij."""
    grid = Q.grid
    bcs = _resolve_bcs(grid, role)
    out = np.empty((3, 3, 3) + grid.shape)
    for d in range(3):
        out[d] = _diff1(Q.data, d, grid.spacings[d], bcs[d])
    return out


def divergence(v: VectorField, role) -> ScalarField:
    grid = v.grid
    bcs = _resolve_bcs(grid, role)
    out = np.zeros(grid.shape)
    for axis in range(3):
        out += _diff1(v.data[axis], axis, grid.spacings[axis], bcs[axis])
    return ScalarField(grid, out)


def tensor_divergence(T: TensorField, role) -> VectorField:
    """Row-wise divergence, out_i = d_j T_ij."""
    grid = T.grid
    bcs = _resolve_bcs(grid, role)
    out = np.zeros((3,) + grid.shape)
    for j in range(3):
        out += _diff1(T.data[:, j], j, grid.spacings[j], bcs[j])
    return VectorField(grid, out)


def laplacian(f: _Field, role) -> _Field:
    """Compact 7-point Laplacian, componentwise for vectors and tensors."""
    bcs = _resolve_bcs(f.grid, role)
    return type(f)(f.grid, _laplacian_data(f.data, f.grid, bcs))


def advect(u: VectorField, f: _Field, role, upwind: bool = False) -> _Field:
    """(u . grad) f, componentwise; optional first-order upwinding."""
    grid = f.grid
    if u.grid != grid:
        raise ValueError("velocity and advected field live on different grids")
    bcs = _resolve_bcs(grid, role)
    out = np.zeros_like(f.data)
    for axis in range(3):
        if grid.counts[axis] == 1:
            continue
        ua = u.data[axis]
        if upwind:
            out += ua * _diff1_upwind(f.data, axis, grid.spacings[axis], bcs[axis], ua)
        else:
            out += ua * _diff1(f.data, axis, grid.spacings[axis], bcs[axis])
    return type(f)(grid, out)


# ---------------------------------------------------------------------------
# trigonometric-transform diagonalization

@dataclass(frozen=True)
class _AxisPlan:
    kind: str               # "fft" | "dct" | "dst"
    lam_compact: np.ndarray  # eigenvalues of the compact second difference
    lam_wide: np.ndarray     # eigenvalues of the centered div(grad(.)) composition
    null_compact: np.ndarray
    null_wide: np.ndarray


def _axis_plan(n: int, h: float, bc: BCKind) -> _AxisPlan:
    k = np.arange(n)
    if bc is BCKind.PERIODIC:
        ang = 2.0 * np.pi * k / n
        null_c = k == 0
        null_w = (k == 0) | ((n % 2 == 0) & (k == n // 2))
        kind = "fft"
    elif bc is BCKind.NEUMANN_ZERO:
        ang = np.pi * k / n
        null_c = k == 0
        null_w = k == 0
        kind = "dct"
    else:
        ang = np.pi * (k + 1) / n
        null_c = np.zeros(n, dtype=bool)
        null_w = np.zeros(n, dtype=bool)
        kind = "dst"
    lam_c = (2.0 * np.cos(ang) - 2.0) / (h * h)
    lam_w = (2.0 * np.cos(2.0 * ang) - 2.0) / (4.0 * h * h)
    lam_c[null_c] = 0.0
    lam_w[null_w] = 0.0
    return _AxisPlan(kind, lam_c, lam_w, null_c, null_w)


def _plans(grid: GridSpec, bcs) -> list[_AxisPlan]:
    return [_axis_plan(grid.counts[a], grid.spacings[a], bcs[a]) for a in range(3)]


def _forward(arr, plans):
    out = arr
    for axis, plan in enumerate(plans):
        ax = out.ndim - 3 + axis
        if plan.kind == "dct":
            out = _fft.dct(out, type=2, axis=ax, workers=_workers)
        elif plan.kind == "dst":
            out = _fft.dst(out, type=2, axis=ax, workers=_workers)
        else:
            out = _fft.fft(out, axis=ax, workers=_workers)
    return out


def _inverse(arr, plans):
    out = arr
    for axis, plan in enumerate(plans):
        ax = out.ndim - 3 + axis
        if plan.kind == "dct":
            out = _fft.idct(out, type=2, axis=ax, workers=_workers)
        elif plan.kind == "dst":
            out = _fft.idst(out, type=2, axis=ax, workers=_workers)
        else:
            out = _fft.ifft(out, axis=ax, workers=_workers)
    return np.ascontiguousarray(out.real)


def _eigen_sum(plans, wide: bool):
    lx = plans[0].lam_wide if wide else plans[0].lam_compact
    ly = plans[1].lam_wide if wide else plans[1].lam_compact
    lz = plans[2].lam_wide if wide else plans[2].lam_compact
    return (lx[:, None, None] + ly[None, :, None] + lz[None, None, :])


def _null_mask(plans, wide: bool):
    nx = plans[0].null_wide if wide else plans[0].null_compact
    ny = plans[1].null_wide if wide else plans[1].null_compact
    nz = plans[2].null_wide if wide else plans[2].null_compact
    return (nx[:, None, None] & ny[None, :, None] & nz[None, None, :])


def _transform_poisson(data, grid, bcs, wide: bool):
    plans = _plans(grid, bcs)
    lam = _eigen_sum(plans, wide)
    null = _null_mask(plans, wide)
    denom = np.where(null, 1.0, lam)
    hat = _forward(data, plans)
    hat /= denom
    hat[..., null] = 0.0
    return _inverse(hat, plans)


def _transform_helmholtz(data, grid, bcs, sigma: float):
    plans = _plans(grid, bcs)
    denom = 1.0 - sigma * _eigen_sum(plans, wide=False)
    hat = _forward(data, plans)
    hat /= denom
    return _inverse(hat, plans)


# ---------------------------------------------------------------------------
# conjugate-gradient fallback

def _cg_solve(apply_op, rhs: np.ndarray, rtol: float, maxiter: int) -> np.ndarray:
    shape = rhs.shape
    op = _sla.LinearOperator(
        (rhs.size, rhs.size),
        matvec=lambda x: apply_op(x.reshape(shape)).ravel(),
        dtype=float,
    )
    x, _info = _sla.cg(op, rhs.ravel(), rtol=rtol, atol=0.0, maxiter=maxiter)
    rhs_norm = float(np.linalg.norm(rhs.ravel()))
    res = float(np.linalg.norm(apply_op(x.reshape(shape)).ravel() - rhs.ravel()))
    rel = res / rhs_norm if rhs_norm > 0 else res
    if rel > rtol:
        raise SolverDivergedError("conjugate-gradient solve did not converge", rel, maxiter)
    return x.reshape(shape)


SOLVER_RTOL = 1e-10


def solve_poisson(rhs: ScalarField, role=FieldRole.PRESSURE,
                  method: str = "transform") -> ScalarField:
    """Solve lap(phi) = rhs with the compact stencil; phi normalized to zero mean.

    The right-hand side must have zero mean on all-Neumann/periodic boxes
    (the mean mode is removed regardless).  The conjugate-gradient path
    raises SolverDivergedError with the achieved residual on failure.
    """
    grid = rhs.grid
    bcs = _resolve_bcs(grid, role)
    if method == "transform":
        return ScalarField(grid, _transform_poisson(rhs.data, grid, bcs, wide=False))
    if method != "cg":
        raise ValueError(f"unknown solve method {method!r}")
    data = rhs.data - rhs.data.mean()
    sol = _cg_solve(lambda x: _laplacian_data(x, grid, bcs), data,
                    SOLVER_RTOL, 10 * data.size)
    return ScalarField(grid, sol - sol.mean())


def solve_projection_poisson(rhs: ScalarField) -> ScalarField:
    """Pressure-projection solve, consistent with divergence(gradient(.)).

    Uses the eigenvalues of the composed centered operators so that
    u - dt * gradient(phi) is divergence-free to rounding under the
    centered divergence; modes invisible to that composition are removed.
    """
    grid = rhs.grid
    bcs = role_bcs(grid, FieldRole.PRESSURE)
    return ScalarField(grid, _transform_poisson(rhs.data, grid, bcs, wide=True))


def solve_helmholtz(rhs: _Field, sigma: float, role=FieldRole.Q_TENSOR,
                    method: str = "transform") -> _Field:
    """Solve (I - sigma * lap) x = rhs componentwise, sigma > 0."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    grid = rhs.grid
    bcs = _resolve_bcs(grid, role)
    if method == "transform":
        return type(rhs)(grid, _transform_helmholtz(rhs.data, grid, bcs, sigma))
    if method != "cg":
        raise ValueError(f"unknown solve method {method!r}")

    def apply_op(x):
        return x - sigma * _laplacian_data(x, grid, bcs)

    flat = rhs.data.reshape(-1, *grid.shape)
    out = np.stack([_cg_solve(apply_op, comp, SOLVER_RTOL, 10 * comp.size) for comp in flat])
    return type(rhs)(grid, out.reshape(rhs.data.shape))


def apply_helmholtz_operator(f: _Field, sigma: float, role=FieldRole.Q_TENSOR) -> _Field:
    """Forward application (I - sigma * lap) f with the role's closure."""
    bcs = _resolve_bcs(f.grid, role)
    return type(f)(f.grid, f.data - sigma * _laplacian_data(f.data, f.grid, bcs))


def default_thread_count() -> int:
    return os.cpu_count() or 1
