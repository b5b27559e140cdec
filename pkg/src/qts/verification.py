"""Manufactured-solution harness: forcing construction and convergence ladders.

Two forcing flavors are supported.  Continuous forcing differentiates the
closed-form fields symbolically and injects the exact residual of the coupled
system, exposing the discretization orders (2 in space, 1 in time).  Discrete
forcing builds the injection from the package's own stencils and the stepping
recurrence, so the chosen fields are reproduced to solver tolerance at any
resolution; this isolates time-stepping bugs from truncation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .constitutive import molecular_field_H
from .fields import (GridSpec, Potential, ScalarField, Stretching,
                     TensorField, VectorField)
from .operators import (FieldRole, apply_helmholtz_operator, laplacian)
from .presets import project_velocity
from .solver import SimState, StepControl, _q_tendency, _u_tendency, step

_X, _Y, _Z, _T = sp.symbols("x y z t", real=True)
_SYMS = (_X, _Y, _Z, _T)


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form (u, Q, p) with u analytically divergence-free and Q
    compatible with the wall closure by construction."""

    name: str
    u_exprs: tuple          # 3 sympy expressions
    q_exprs: tuple          # 3x3 nested tuple of sympy expressions
    p_expr: object

    def __post_init__(self):
        div = sum(sp.diff(self.u_exprs[i], _SYMS[i]) for i in range(3))
        if sp.simplify(div) != 0:
            raise ValueError(f"case {self.name}: velocity is not divergence-free")


def _lambdify(expr):
    fn = sp.lambdify(_SYMS, expr, modules="numpy")

    def evaluate(X, Y, Z, t):
        out = fn(X, Y, Z, t)
        return np.broadcast_to(np.asarray(out, dtype=float), X.shape).copy()

    return evaluate


class _CaseEvaluator:
    """Lambdified samplers for one case on one grid."""

    def __init__(self, case: ManufacturedCase, grid: GridSpec):
        self.grid = grid
        self.mesh = grid.meshgrid()
        self._u = [_lambdify(e) for e in case.u_exprs]
        self._q = [[_lambdify(case.q_exprs[i][j]) for j in range(3)] for i in range(3)]
        self._p = _lambdify(case.p_expr)

    def velocity(self, t) -> VectorField:
        X, Y, Z = self.mesh
        return VectorField(self.grid, np.stack([f(X, Y, Z, t) for f in self._u]))

    def tensor(self, t) -> TensorField:
        X, Y, Z = self.mesh
        data = np.stack([np.stack([self._q[i][j](X, Y, Z, t) for j in range(3)])
                         for i in range(3)])
        return TensorField(self.grid, data)

    def pressure(self, t) -> ScalarField:
        X, Y, Z = self.mesh
        return ScalarField(self.grid, self._p(X, Y, Z, t))


def sample_state(case: ManufacturedCase, grid: GridSpec, t: float = 0.0,
                 project: bool = True) -> SimState:
    ev = _CaseEvaluator(case, grid)
    u = ev.velocity(t)
    if project:
        u = project_velocity(u)
    return SimState(u, ev.pressure(t), ev.tensor(t), t=t)


# ---------------------------------------------------------------------------
# symbolic model residual (continuous forcing)

def _sym_matrix(rows):
    return sp.Matrix(3, 3, lambda i, j: rows[i][j])


def _sym_potential(Q: sp.Matrix, params, potential: Potential, m1_theta: float):
    a, b, c = params.a, params.b, params.c
    normsq = sum(Q[i, j] ** 2 for i in range(3) for j in range(3))
    Qt = Q.T
    if potential is Potential.FZ:
        Q2 = Q * Q
        return a * Q - b * (Q2 - sp.trace(Q2) / 3 * sp.eye(3)) + c * normsq * Q
    f_ff = a * Q - sp.Rational(1, 3) * b * (Q * Q + Q * Qt + Qt * Q) + c * normsq * Q
    if potential is Potential.FF:
        return f_ff
    ddot_qqt = sum(Q[i, j] * Qt[i, j] for i in range(3) for j in range(3))
    alpha_quad = -(b / sp.Integer(9)) * (ddot_qqt + 2 * normsq)
    alpha_trace = sp.trace(f_ff) / 3
    alpha = m1_theta * alpha_quad + (1 - m1_theta) * alpha_trace
    return f_ff - alpha * sp.eye(3)


def _sym_lap(expr):
    return sum(sp.diff(expr, s, 2) for s in (_X, _Y, _Z))


def symbolic_residual(case: ManufacturedCase, params, variants):
    """(g_u, g_Q) sympy expressions: the exact residual of the coupled system
    evaluated on the case fields, to be injected as forcing."""
    u = sp.Matrix(case.u_exprs)
    Q = _sym_matrix(case.q_exprs)
    p = case.p_expr
    coords = (_X, _Y, _Z)

    grad_u = sp.Matrix(3, 3, lambda i, j: sp.diff(u[i], coords[j]))
    if variants.stretching is Stretching.COROTATIONAL:
        A = (grad_u - grad_u.T) / 2
    else:
        A = grad_u
    S = A * Q.T - Q.T * A

    f = _sym_potential(Q, params, variants.potential, variants.m1_theta)
    H = sp.Matrix(3, 3, lambda i, j: -params.epsilon * _sym_lap(Q[i, j]) + f[i, j])

    tau = sp.Matrix(3, 3, lambda i, j: -params.epsilon * sum(
        sp.diff(Q[k, l], coords[j]) * sp.diff(Q[k, l], coords[i])
        for k in range(3) for l in range(3)))
    sig = H * Q - Q * H

    g_u = []
    for i in range(3):
        expr = (sp.diff(u[i], _T)
                + sum(u[j] * sp.diff(u[i], coords[j]) for j in range(3))
                - params.nu * _sym_lap(u[i])
                + sp.diff(p, coords[i])
                - sum(sp.diff(tau[i, j] + sig[i, j], coords[j]) for j in range(3)))
        g_u.append(expr)

    g_q = [[(sp.diff(Q[i, j], _T)
             + sum(u[k] * sp.diff(Q[i, j], coords[k]) for k in range(3))
             - S[i, j] + params.gamma * H[i, j])
            for j in range(3)] for i in range(3)]
    return g_u, g_q


class ContinuousForcing:
    """Forcing callable evaluating the symbolic residual at the step's start time."""

    def __init__(self, case: ManufacturedCase, grid: GridSpec, params, variants):
        g_u, g_q = symbolic_residual(case, params, variants)
        self.grid = grid
        self.mesh = grid.meshgrid()
        self._gu = [_lambdify(e) for e in g_u]
        self._gq = [[_lambdify(g_q[i][j]) for j in range(3)] for i in range(3)]

    def __call__(self, t, dt):
        X, Y, Z = self.mesh
        g_u = np.stack([f(X, Y, Z, t) for f in self._gu])
        g_q = np.stack([np.stack([self._gq[i][j](X, Y, Z, t) for j in range(3)])
                        for i in range(3)])
        return g_u, g_q


class DiscreteForcing:
    """Forcing built from the stepping recurrence on sampled target fields.

    The velocity target is the discretely projected sample (the projection is
    idempotent on it), so the scheme reproduces the targets to solver
    tolerance at every step regardless of resolution.
    """

    def __init__(self, case: ManufacturedCase, grid: GridSpec, params, variants,
                 ctrl: StepControl):
        self.ev = _CaseEvaluator(case, grid)
        self.grid = grid
        self.params = params
        self.variants = variants
        self.ctrl = ctrl
        self._cache: dict = {}

    def target(self, t):
        key = round(float(t), 12)
        if key not in self._cache:
            u = project_velocity(self.ev.velocity(t))
            self._cache[key] = (u, self.ev.tensor(t))
            if len(self._cache) > 8:
                self._cache.pop(next(iter(self._cache)))
        return self._cache[key]

    def __call__(self, t, dt):
        params, variants, ctrl = self.params, self.variants, self.ctrl
        u_n, q_n = self.target(t)
        u_np1, q_np1 = self.target(t + dt)

        sigma = dt * params.gamma * params.epsilon
        lhs_q = apply_helmholtz_operator(q_np1, sigma, FieldRole.Q_TENSOR)
        g_star = _q_tendency(u_n, q_n, params, variants, ctrl.upwind)
        g_q = (lhs_q.data - q_n.data) / dt - g_star

        h_np1 = molecular_field_H(q_np1, params, variants.potential, variants.m1_theta)
        tend = _u_tendency(u_n, q_np1, h_np1, params, ctrl.upwind, couple_q=True)
        if ctrl.viscous_implicit:
            lhs_u = apply_helmholtz_operator(u_np1, dt * params.nu, FieldRole.VELOCITY).data
        else:
            lhs_u = u_np1.data
            tend = tend + params.nu * laplacian(u_n, FieldRole.VELOCITY).data
        g_u = (lhs_u - u_n.data) / dt - tend
        return g_u, g_q


def build_forcing(case: ManufacturedCase, grid: GridSpec, params, variants,
                  ctrl: StepControl, kind: str = "continuous"):
    if kind == "continuous":
        return ContinuousForcing(case, grid, params, variants)
    if kind == "discrete":
        return DiscreteForcing(case, grid, params, variants, ctrl)
    raise ValueError(f"unknown forcing kind {kind!r}")


# ---------------------------------------------------------------------------
# ladders

@dataclass(frozen=True)
class LadderPoint:
    counts: tuple
    h: float
    dt: float
    steps: int
    err_u: float
    err_q: float
    max_dev: float  # max-norm deviation from the targets at t_end


@dataclass
class ConvergenceTable:
    axis: str                  # "h" or "dt"
    points: list = field(default_factory=list)
    order_u: float | None = None
    order_q: float | None = None

    def _fit(self):
        xs = np.log([getattr(p, self.axis) for p in self.points])
        if len(set(np.round(xs, 12))) < 2:
            return
        eu = np.log([p.err_u for p in self.points])
        eq = np.log([p.err_q for p in self.points])
        self.order_u = float(np.polyfit(xs, eu, 1)[0])
        self.order_q = float(np.polyfit(xs, eq, 1)[0])

    def to_text(self) -> str:
        rows = [f"{'cells':>12} {self.axis:>10} {'steps':>6} {'err_u_L2':>12} {'err_Q_L2':>12}"]
        for p in self.points:
            rows.append(f"{str(p.counts):>12} {getattr(p, self.axis):>10.4e} {p.steps:>6} "
                        f"{p.err_u:>12.4e} {p.err_q:>12.4e}")
        ou = "n/a" if self.order_u is None else f"{self.order_u:.2f}"
        oq = "n/a" if self.order_q is None else f"{self.order_q:.2f}"
        rows.append(f"observed order: u {ou}, Q {oq}")
        return "\n".join(rows)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"cells_x,cells_y,cells_z,{self.axis},steps,err_u_l2,err_q_l2,max_dev\n")
            for p in self.points:
                fh.write(f"{p.counts[0]},{p.counts[1]},{p.counts[2]},"
                         f"{getattr(p, self.axis):.17g},{p.steps},"
                         f"{p.err_u:.17g},{p.err_q:.17g},{p.max_dev:.17g}\n")


def _l2_error(a: np.ndarray, b: np.ndarray, cell_volume: float) -> float:
    d = a - b
    return float(np.sqrt(np.sum(d * d) * cell_volume))


def run_forced(case: ManufacturedCase, grid: GridSpec, params, variants,
               dt: float, t_end: float, forcing_kind: str,
               viscous_implicit: bool = False):
    """March the forced system from the sampled initial state; returns
    (final state, LadderPoint)."""
    steps = max(1, round(t_end / dt))
    dt = t_end / steps
    ctrl = StepControl(dt=dt, dt_min=dt, dt_max=dt, cfl_target=1.0,
                       viscous_implicit=viscous_implicit)
    forcing = build_forcing(case, grid, params, variants, ctrl, forcing_kind)
    state = sample_state(case, grid, 0.0)
    for _ in range(steps):
        state = step(state, params, variants, ctrl, dt=dt, forcing=forcing)

    if forcing_kind == "discrete":
        u_ref, q_ref = forcing.target(state.t)
    else:
        ev = _CaseEvaluator(case, grid)
        u_ref, q_ref = ev.velocity(state.t), ev.tensor(state.t)
    vol = grid.cell_volume
    err_u = _l2_error(state.u.data, u_ref.data, vol)
    err_q = _l2_error(state.Q.data, q_ref.data, vol)
    max_dev = max(float(np.abs(state.u.data - u_ref.data).max()),
                  float(np.abs(state.Q.data - q_ref.data).max()))
    point = LadderPoint(grid.counts, grid.min_spacing(), dt, steps, err_u, err_q, max_dev)
    return state, point


def convergence_study(case: ManufacturedCase, params, variants, ladder,
                      t_end: float, forcing_kind: str = "continuous",
                      axis: str = "h", viscous_implicit: bool = False) -> ConvergenceTable:
    """Run every (grid, dt) ladder rung and fit observed orders.

    For discrete forcing the errors sit at solver tolerance by construction,
    so no order is fitted.
    """
    table = ConvergenceTable(axis=axis)
    for grid, dt in ladder:
        _, point = run_forced(case, grid, params, variants, dt, t_end,
                              forcing_kind, viscous_implicit)
        table.points.append(point)
    if forcing_kind != "discrete":
        table._fit()
    return table


# ---------------------------------------------------------------------------
# stock cases

def _uniaxial(n):
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    return np.outer(n, n) - np.eye(3) / 3.0


def periodic_case(lx=1.0, ly=1.0, u_amp=0.05, q0=0.15, q1=0.1,
                  omega=2.0, director=(2.0, -1.0, 1.0)) -> ManufacturedCase:
    """Fully periodic planar vortex plus an oscillating tensor mode."""
    kx, ky = 2 * sp.pi / lx, 2 * sp.pi / ly
    gt = sp.cos(omega * _T)
    u = (u_amp * sp.sin(kx * _X) * sp.cos(ky * _Y) * gt,
         -u_amp * sp.Rational(1, 1) * (kx / ky) * sp.cos(kx * _X) * sp.sin(ky * _Y) * gt,
         sp.Integer(0))
    E = _uniaxial(director)
    s = q0 + q1 * sp.cos(kx * _X) * sp.cos(ky * _Y) * sp.cos(omega * _T / 2)
    q = tuple(tuple(sp.Float(E[i, j]) * s for j in range(3)) for i in range(3))
    p = sp.Rational(1, 10) * sp.sin(kx * _X) * sp.sin(ky * _Y) * gt
    return ManufacturedCase("periodic-slab", u, q, p)


def walled_case(lx=1.0, ly=1.0, u_amp=0.04, q0=0.15, q1=0.1,
                omega=2.0, director=(2.0, -1.0, 1.0)) -> ManufacturedCase:
    """Wall-bounded x/y box (periodic z): stream-function vortex vanishing on
    the walls, tensor with zero normal slope there."""
    sx, sy = sp.pi / lx, sp.pi / ly
    gt = sp.cos(omega * _T)
    psi = u_amp * (lx / sp.pi) * sp.sin(sx * _X) ** 2 * sp.sin(sy * _Y) ** 2 * gt
    u = (sp.diff(psi, _Y), -sp.diff(psi, _X), sp.Integer(0))
    E = _uniaxial(director)
    s = q0 + q1 * sp.cos(sx * _X) * sp.cos(sy * _Y) * sp.cos(omega * _T / 2)
    q = tuple(tuple(sp.Float(E[i, j]) * s for j in range(3)) for i in range(3))
    p = sp.Rational(1, 10) * sp.cos(sx * _X) * sp.cos(sy * _Y) * gt
    return ManufacturedCase("walled-slab", u, q, p)
