"""Named initial conditions.

All presets produce a symmetric traceless order tensor compatible with the
natural wall condition (cosine profiles with zero normal slope) and a velocity
that is projected to be discretely divergence-free before the run starts.
"""

from __future__ import annotations

import numpy as np

from .fields import FaceBC, GridSpec, ScalarField, TensorField, VectorField
from .operators import FieldRole, divergence, gradient, solve_projection_poisson
from .solver import SimState

PRESET_NAMES = ("zero", "taylor-green-q0", "uniaxial-cosine", "random-smooth")


def project_velocity(u: VectorField) -> VectorField:
    """One discrete projection pass; removes the centered divergence."""
    phi = solve_projection_poisson(divergence(u, FieldRole.VELOCITY))
    return VectorField(u.grid, u.data - gradient(phi, FieldRole.PRESSURE).data)


def _director_tensor(director) -> np.ndarray:
    n = np.asarray(director, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0:
        raise ValueError("director must be a nonzero vector")
    n = n / norm
    return np.outer(n, n) - np.eye(3) / 3.0


def _taylor_green_velocity(grid: GridSpec, amplitude: float) -> np.ndarray:
    """Planar periodic vortex; discretely divergence-free on square x/y boxes."""
    X, Y, _ = grid.meshgrid()
    kx = 2.0 * np.pi / grid.lx
    ky = 2.0 * np.pi / grid.ly
    u = np.zeros((3,) + grid.shape)
    u[0] = amplitude * np.sin(kx * X) * np.cos(ky * Y)
    u[1] = -amplitude * (kx / ky) * np.cos(kx * X) * np.sin(ky * Y)
    return u


def preset_zero(grid: GridSpec) -> SimState:
    return SimState.zero(grid)


def preset_taylor_green_q0(grid: GridSpec, u_amplitude: float = 0.1) -> SimState:
    if grid.bc_x is not FaceBC.PERIODIC or grid.bc_y is not FaceBC.PERIODIC:
        raise ValueError("taylor-green-q0 needs periodic x and y")
    u = VectorField(grid, _taylor_green_velocity(grid, u_amplitude))
    return SimState(project_velocity(u), ScalarField(grid), TensorField(grid))


def _axis_cosine(grid: GridSpec, axis: int) -> np.ndarray:
    """Lowest even profile along one axis: full period if periodic, half if wall."""
    c = grid.axis_coords(axis)
    length = grid.lengths[axis]
    k = 2.0 * np.pi / length if grid.bcs[axis] is FaceBC.PERIODIC else np.pi / length
    return np.cos(k * c)


def preset_uniaxial_cosine(grid: GridSpec, q_amplitude: float = 0.3,
                           director=(1.0, 1.0, 0.0), u_amplitude: float = 0.0) -> SimState:
    """Q = s(x) (n x n - I/3) with a wall-compatible cosine s; optionally adds
    a small planar vortex on top (u_amplitude > 0)."""
    E = _director_tensor(director)
    s = q_amplitude * _axis_cosine(grid, 0)[:, None, None] * np.ones(grid.shape)
    Q = TensorField(grid, E[:, :, None, None, None] * s[None, None])
    if u_amplitude != 0.0:
        u = VectorField(grid, _taylor_green_velocity(grid, u_amplitude))
        u = project_velocity(u)
    else:
        u = VectorField(grid)
    return SimState(u, ScalarField(grid), Q)


def _random_profile(grid: GridSpec, axis: int, modes: int, rng,
                    vanish_on_walls: bool) -> np.ndarray:
    """Band-limited 1D profile respecting the axis closure."""
    c = grid.axis_coords(axis)
    n = grid.counts[axis]
    length = grid.lengths[axis]
    if n == 1:
        return np.ones(1)
    out = np.zeros(n)
    for k in range(1, modes + 1):
        amp = rng.standard_normal() / k
        if grid.bcs[axis] is FaceBC.PERIODIC:
            phase = rng.uniform(0.0, 2.0 * np.pi)
            out += amp * np.cos(2.0 * np.pi * k * c / length + phase)
        elif vanish_on_walls:
            out += amp * np.sin(np.pi * k * c / length)
        else:
            out += amp * np.cos(np.pi * k * c / length)
    return out


def preset_random_smooth(grid: GridSpec, q_amplitude: float = 0.2,
                         u_amplitude: float = 0.05, modes: int = 2,
                         seed: int = 1234) -> SimState:
    """Band-limited random fields, reproducible from the seed."""
    rng = np.random.default_rng(seed)

    q_data = np.zeros((3, 3) + grid.shape)
    for _ in range(3):
        A = rng.standard_normal((3, 3))
        E = 0.5 * (A + A.T)
        E -= np.trace(E) / 3.0 * np.eye(3)
        E /= np.linalg.norm(E)
        prof = (_random_profile(grid, 0, modes, rng, False)[:, None, None]
                * _random_profile(grid, 1, modes, rng, False)[None, :, None]
                * _random_profile(grid, 2, modes, rng, False)[None, None, :])
        q_data += E[:, :, None, None, None] * prof[None, None]
    sup = np.sqrt(np.einsum("ij...,ij...->...", q_data, q_data)).max()
    if sup > 0 and q_amplitude > 0:
        q_data *= q_amplitude / sup
    elif q_amplitude == 0:
        q_data[:] = 0.0

    u_data = np.zeros((3,) + grid.shape)
    if u_amplitude > 0:
        for comp in range(3):
            if grid.counts[comp] == 1:
                continue
            u_data[comp] = (_random_profile(grid, 0, modes, rng, True)[:, None, None]
                            * _random_profile(grid, 1, modes, rng, True)[None, :, None]
                            * _random_profile(grid, 2, modes, rng, True)[None, None, :])
        u = project_velocity(VectorField(grid, u_data))
        umax = np.sqrt(np.sum(u.data ** 2, axis=0)).max()
        if umax > 0:
            u.data *= u_amplitude / umax
        u_data = u.data

    return SimState(VectorField(grid, u_data), ScalarField(grid),
                    TensorField(grid, q_data))


def initial_state(grid: GridSpec, preset: str, *, q_amplitude: float = 0.3,
                  u_amplitude: float = 0.05, modes: int = 2, seed: int = 1234,
                  director=(1.0, 1.0, 0.0)) -> SimState:
    if preset == "zero":
        return preset_zero(grid)
    if preset == "taylor-green-q0":
        return preset_taylor_green_q0(grid, u_amplitude)
    if preset == "uniaxial-cosine":
        return preset_uniaxial_cosine(grid, q_amplitude, director, u_amplitude)
    if preset == "random-smooth":
        return preset_random_smooth(grid, q_amplitude, u_amplitude, modes, seed)
    raise ValueError(f"unknown preset {preset!r}; choose one of {PRESET_NAMES}")
