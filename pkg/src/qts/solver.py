"""Coupled time stepper: semi-implicit order-tensor update, projected momentum update.

One step, in order:
  (1) explicit order-tensor tendency G = S(grad u, Q) - (u . grad) Q - gamma f(Q);
  (2) backward Euler on the stiff diffusion: (I - dt gamma eps lap) Q_new = Q + dt G;
  (3) momentum tendency with the updated tensor: advection, viscosity (explicit
      or implicit), elastic stress tau(Q_new) and commutator stress built from
      the recomputed molecular field H(Q_new);
  (4) pressure projection enforcing the centered discrete divergence;
  (5) wall velocity stays pinned to zero through the antisymmetric ghost
      closure every operator applies (nothing stored on walls to re-zero).

Every sub-step is trace-linear and annihilates the trace on traceless input
(traceless potential + corotational stretching), so those constraints are
preserved to rounding rather than enforced.  The step is single-threaded per
state; independent states may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import (antisym_stress_sigma, elastic_stress_tau,
                           molecular_field_H, potential_f, stretching_S)
from .errors import CFLViolation, NonFiniteStateError
from .fields import (GridSpec, ModelParams, ScalarField, TensorField,
                     VariantConfig, VectorField)
from .operators import (FieldRole, advect, divergence, gradient, laplacian,
                        solve_helmholtz, solve_projection_poisson,
                        tensor_divergence, vector_gradient)

EPS_FLOOR = 1e-12


@dataclass
class SimState:
    """The single evolving object: velocity, pressure, order tensor, clock."""

    u: VectorField
    p: ScalarField
    Q: TensorField
    t: float = 0.0
    step_index: int = 0

    @classmethod
    def zero(cls, grid: GridSpec) -> "SimState":
        return cls(VectorField(grid), ScalarField(grid), TensorField(grid))

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    def copy(self) -> "SimState":
        return SimState(self.u.copy(), self.p.copy(), self.Q.copy(),
                        self.t, self.step_index)

    def is_finite(self) -> bool:
        return self.u.is_finite() and self.p.is_finite() and self.Q.is_finite()


@dataclass
class StepControl:
    dt: float
    dt_min: float
    dt_max: float
    cfl_target: float = 0.5
    viscous_implicit: bool = False
    upwind: bool = False

    def __post_init__(self):
        if not 0.0 < self.cfl_target <= 1.0:
            raise ValueError(f"cfl_target must lie in (0, 1], got {self.cfl_target}")
        if not (self.dt_min <= self.dt <= self.dt_max):
            raise ValueError(
                f"need dt_min <= dt <= dt_max, got {self.dt_min}, {self.dt}, {self.dt_max}")


def compute_dt(state: SimState, params: ModelParams, ctrl: StepControl) -> float:
    """Advective CFL step clamped to [dt_min, dt_max], then capped by the
    explicit bulk-potential stiffness bound."""
    grid = state.grid
    u_mag = np.sqrt(np.sum(state.u.data ** 2, axis=0))
    u_max = float(u_mag.max())
    dt = ctrl.cfl_target * grid.min_spacing() / max(u_max, EPS_FLOOR)
    dt = min(max(dt, ctrl.dt_min), ctrl.dt_max)

    q_mag = np.sqrt(np.einsum("ij...,ij...->...", state.Q.data, state.Q.data))
    q_sup = float(q_mag.max())
    stiffness = params.gamma * (abs(params.a) + 2.0 * abs(params.b) * q_sup
                                + 3.0 * params.c * q_sup ** 2) + EPS_FLOOR
    return min(dt, 0.5 / stiffness)


def _q_tendency(u, Q, params, variants, upwind):
    """Explicit right-hand side of the order-tensor update (diffusion excluded)."""
    grad_u = vector_gradient(u, FieldRole.VELOCITY)
    S = stretching_S(grad_u, Q, variants.stretching)
    adv = advect(u, Q, FieldRole.Q_TENSOR, upwind=upwind)
    f = potential_f(Q, params, variants.potential, variants.m1_theta)
    return S.data - adv.data - params.gamma * f.data


def _u_tendency(u, Q_new, H_new, params, upwind, couple_q):
    """Momentum tendency without viscosity and pressure."""
    adv = advect(u, u, FieldRole.VELOCITY, upwind=upwind)
    tend = -adv.data
    if couple_q:
        tau = elastic_stress_tau(Q_new, params)
        sig = antisym_stress_sigma(H_new, Q_new)
        tend = tend + tensor_divergence(tau, FieldRole.Q_TENSOR).data \
                    + tensor_divergence(sig, FieldRole.Q_TENSOR).data
    return tend


def step(state: SimState, params: ModelParams, variants: VariantConfig,
         ctrl: StepControl, dt: float | None = None, forcing=None,
         couple_q: bool = True) -> SimState:
    """Advance one step of size dt (default ctrl.dt).

    `forcing`, when given, is called as forcing(t, dt) and must return a pair
    of arrays (g_u, g_Q) added to the momentum and order-tensor tendencies
    (either entry may be None).  `couple_q=False` freezes Q and removes the
    order-tensor stresses from the momentum equation (plain Navier-Stokes).
    """
    grid = state.grid
    if dt is None:
        dt = ctrl.dt
    u_max = float(np.sqrt(np.sum(state.u.data ** 2, axis=0)).max())
    h = grid.min_spacing()
    cfl = u_max * dt / h
    if cfl > ctrl.cfl_target * (1.0 + 1e-12):
        raise CFLViolation(dt, ctrl.cfl_target * h / max(u_max, EPS_FLOOR))

    g_u = g_q = None
    if forcing is not None:
        g_u, g_q = forcing(state.t, dt)

    # (1)-(2) order-tensor update
    if couple_q:
        G = _q_tendency(state.u, state.Q, params, variants, ctrl.upwind)
        if g_q is not None:
            G = G + g_q
        rhs_q = TensorField(grid, state.Q.data + dt * G)
        sigma = dt * params.gamma * params.epsilon
        Q_new = solve_helmholtz(rhs_q, sigma, FieldRole.Q_TENSOR)
        H_new = molecular_field_H(Q_new, params, variants.potential, variants.m1_theta)
    else:
        Q_new = state.Q.copy()
        H_new = None

    # (3) momentum predictor
    tend = _u_tendency(state.u, Q_new, H_new, params, ctrl.upwind, couple_q)
    if g_u is not None:
        tend = tend + g_u
    if ctrl.viscous_implicit:
        rhs_u = VectorField(grid, state.u.data + dt * tend)
        u_star = solve_helmholtz(rhs_u, dt * params.nu, FieldRole.VELOCITY)
    else:
        visc = laplacian(state.u, FieldRole.VELOCITY)
        u_star = VectorField(grid, state.u.data + dt * (tend + params.nu * visc.data))

    # (4) pressure projection
    div_star = divergence(u_star, FieldRole.VELOCITY)
    phi = solve_projection_poisson(ScalarField(grid, div_star.data / dt))
    u_new = VectorField(grid, u_star.data - dt * gradient(phi, FieldRole.PRESSURE).data)

    # (5) wall zeros hold via the velocity ghost closure; advance the clock
    return SimState(u_new, phi, Q_new, state.t + dt, state.step_index + 1)


def run(state: SimState, params: ModelParams, variants: VariantConfig,
        ctrl: StepControl, t_end: float, hooks=(), forcing=None,
        couple_q: bool = True, crash_snapshot_path=None) -> SimState:
    """Repeated stepping until t >= t_end; hooks see the state after each step.

    Aborts with NonFiniteStateError on NaN/Inf, dumping the last good state to
    `crash_snapshot_path` (if given) before raising.
    """
    if t_end < state.t:
        raise ValueError(f"t_end {t_end} precedes the current time {state.t}")
    tiny = 1e-12 * max(1.0, abs(t_end))
    while state.t < t_end - tiny:
        dt = min(compute_dt(state, params, ctrl), t_end - state.t)
        new_state = step(state, params, variants, ctrl, dt=dt, forcing=forcing,
                         couple_q=couple_q)
        if not new_state.is_finite():
            path = None
            if crash_snapshot_path is not None:
                from .snapshot import write_snapshot
                write_snapshot(crash_snapshot_path, state)
                path = crash_snapshot_path
            raise NonFiniteStateError(new_state.t, new_state.step_index, path)
        state = new_state
        for hook in hooks:
            hook(state)
    return state
