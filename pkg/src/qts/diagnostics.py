"""Energy ledger, constraint monitors, Bochner mixed-norm accumulators, criterion report.

The ledger tracks the exact dissipation identity of the coupled system,

    d/dt ( kinetic + elastic + bulk energy ) + nu ||grad u||^2 + gamma ||H||^2 = 0,

whose discrete residual is first order in dt.  The mixed-norm machinery
integrates spatial Lp norms in time (trapezoid rule, every step) to report the
L^r(0,T; L^q) quantities entering the uniqueness and regularity criteria:
velocity-gradient and Q-Laplacian families with temporal exponent
r = 2q/(2q-3), Serrin-type velocity and Q-gradient families with
r = 2p/(p-3), the Q-gradient conclusion pair (L^inf L^3, L^3 L^9), and the
derived exponent gamma = min(q, 2q/(2q-3)) for the (lap Q, dt Q) pair.

Reductions use numpy pairwise summation, so reports are reproducible
run-to-run at a fixed thread count; accumulators are single-writer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

import numpy as np

from .constitutive import bulk_F, molecular_field_H
from .fields import TensorField, _Field
from .operators import (FieldRole, divergence, laplacian, tensor_gradient,
                        vector_gradient)

FLOOR_REL = 1e-14
_TINY = 1e-300

INF = math.inf


# ---------------------------------------------------------------------------
# spatial norms

def _magnitude(f: _Field) -> np.ndarray:
    ncomp = f.data.ndim - 3
    if ncomp == 0:
        return np.abs(f.data)
    axes = tuple(range(ncomp))
    return np.sqrt(np.sum(f.data * f.data, axis=axes))


def lp_norm_of_magnitude(mag: np.ndarray, p: float, cell_volume: float) -> float:
    if p < 1:
        raise ValueError(f"Lp exponent must be >= 1, got {p}")
    if math.isinf(p):
        return float(mag.max())
    return float((np.sum(mag ** p) * cell_volume) ** (1.0 / p))


def lp_norm(f: _Field, p: float) -> float:
    """Midpoint-rule L^p norm over cell centers; pointwise magnitude is
    Euclidean for vectors and Frobenius for tensors; p = inf gives the max."""
    return lp_norm_of_magnitude(_magnitude(f), p, f.grid.cell_volume)


def grad_q_magnitude(Q: TensorField) -> np.ndarray:
    G = tensor_gradient(Q, FieldRole.Q_TENSOR)
    return np.sqrt(np.einsum("dij...,dij...->...", G, G))


# ---------------------------------------------------------------------------
# per-state ledger

@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    e_kinetic: float
    e_elastic: float
    e_bulk: float
    dissipation_visc: float
    dissipation_relax: float
    sup_Q: float
    trace_drift: float
    sym_drift: float
    grad_Q_L3: float
    div_u_L2: float


RECORD_FIELDS = tuple(f.name for f in dc_fields(DiagnosticsRecord))

# quantities that are non-negative by construction (e_bulk is sign-indefinite)
_NONNEG_FIELDS = ("e_kinetic", "e_elastic", "dissipation_visc", "dissipation_relax",
                  "sup_Q", "trace_drift", "sym_drift", "grad_Q_L3", "div_u_L2")


def constraint_drifts(Q: TensorField) -> tuple[float, float, float]:
    """Max over cells of (|tr Q|, |Q - Q^t|_F, |Q|_F)."""
    tr = np.einsum("ii...->...", Q.data)
    asym = Q.data - np.swapaxes(Q.data, 0, 1)
    sym_mag = np.sqrt(np.einsum("ij...,ij...->...", asym, asym))
    sup = np.sqrt(np.einsum("ij...,ij...->...", Q.data, Q.data))
    return float(np.abs(tr).max()), float(sym_mag.max()), float(sup.max())


def energy_ledger(state, params, variants) -> DiagnosticsRecord:
    """All ledger entries for the current state."""
    grid = state.u.grid
    vol = grid.cell_volume

    u_mag = _magnitude(state.u)
    e_kin = 0.5 * float(np.sum(u_mag ** 2)) * vol

    gq = grad_q_magnitude(state.Q)
    e_elastic = 0.5 * params.epsilon * float(np.sum(gq ** 2)) * vol
    grad_q_l3 = lp_norm_of_magnitude(gq, 3.0, vol)

    e_bulk = float(np.sum(bulk_F(state.Q, params).data)) * vol

    gu = vector_gradient(state.u, FieldRole.VELOCITY)
    diss_visc = params.nu * float(np.sum(gu.data * gu.data)) * vol

    H = molecular_field_H(state.Q, params, variants.potential, variants.m1_theta)
    diss_relax = params.gamma * float(np.sum(H.data * H.data)) * vol

    trace_drift, sym_drift, sup_q = constraint_drifts(state.Q)
    div_u = lp_norm(divergence(state.u, FieldRole.VELOCITY), 2.0)

    rec = DiagnosticsRecord(
        t=state.t, e_kinetic=e_kin, e_elastic=e_elastic, e_bulk=e_bulk,
        dissipation_visc=diss_visc, dissipation_relax=diss_relax,
        sup_Q=sup_q, trace_drift=trace_drift, sym_drift=sym_drift,
        grad_Q_L3=grad_q_l3, div_u_L2=div_u,
    )
    for name in RECORD_FIELDS:
        v = getattr(rec, name)
        if not math.isfinite(v):
            raise ValueError(f"diagnostics entry {name} is non-finite")
        if name in _NONNEG_FIELDS and v < 0:
            raise ValueError(f"diagnostics entry {name} is negative: {v}")
    return rec


def energy_residual(rec_n: DiagnosticsRecord, rec_np1: DiagnosticsRecord, dt: float) -> float:
    """|dE/dt + dissipation| across one step, normalized by the mean dissipation."""
    e0 = rec_n.e_kinetic + rec_n.e_elastic + rec_n.e_bulk
    e1 = rec_np1.e_kinetic + rec_np1.e_elastic + rec_np1.e_bulk
    d0 = rec_n.dissipation_visc + rec_n.dissipation_relax
    d1 = rec_np1.dissipation_visc + rec_np1.dissipation_relax
    d_mean = 0.5 * (d0 + d1)
    raw = (e1 - e0) / dt + d_mean
    scale = FLOOR_REL * max(abs(e0), abs(e1)) / max(dt, _TINY)
    return abs(raw) / max(d_mean, scale, _TINY)


def sup_q_bound(sup_q0: float, params) -> float:
    """A-priori sup bound proxy for the order tensor, fixed at run start."""
    return max(sup_q0, math.sqrt((abs(params.a) + 2.0 * abs(params.b) * sup_q0 + 1.0) / params.c))


# ---------------------------------------------------------------------------
# Bochner mixed norms

def bochner_conjugate(q: float) -> float:
    """Temporal exponent paired with spatial L^q in the gradient-type criteria:
    r = 2q/(2q-3), i.e. 1/r = 1 - 3/(2q); q = 3/2 maps to r = inf."""
    if q < 1.5:
        raise ValueError(f"gradient-criterion exponent must be >= 3/2, got {q}")
    if q == 1.5:
        return INF
    if math.isinf(q):
        return 1.0
    return 2.0 * q / (2.0 * q - 3.0)


def serrin_conjugate(p: float) -> float:
    """Temporal exponent of the Serrin-type families: r = 2p/(p-3), p in [3, inf]."""
    if p < 3.0:
        raise ValueError(f"Serrin-family exponent must be >= 3, got {p}")
    if p == 3.0:
        return INF
    if math.isinf(p):
        return 2.0
    return 2.0 * p / (p - 3.0)


def derived_gamma(q: float) -> float:
    """Exponent gamma = min(q, 2q/(2q-3)) of the derived (lap Q, dt Q) regularity."""
    return min(q, bochner_conjugate(q))


class MixedNormAccumulator:
    """Running integral of ||field(s)||_q^r ds (trapezoid), or running max for r = inf.

    The report value is integral^(1/r), respectively the max.  Samples must
    arrive with strictly increasing times.
    """

    def __init__(self, label: str, q: float, r: float):
        if q < 1:
            raise ValueError(f"spatial exponent must be >= 1, got {q}")
        if not (r >= 1):
            raise ValueError(f"temporal exponent must be >= 1 or inf, got {r}")
        self.label = label
        self.q = q
        self.r = r
        self.running_integral = 0.0
        self.running_max = 0.0
        self._last_t: float | None = None
        self._last_pow = 0.0
        self.samples = 0

    @property
    def key(self) -> tuple[str, float, float]:
        return (self.label, self.q, self.r)

    def update(self, value: float, t: float):
        if self._last_t is not None and not t > self._last_t:
            raise ValueError(f"time regression in accumulator {self.key}: "
                             f"{t} after {self._last_t}")
        if math.isinf(self.r):
            self.running_max = max(self.running_max, value)
        else:
            vpow = value ** self.r
            if self._last_t is not None:
                self.running_integral += 0.5 * (self._last_pow + vpow) * (t - self._last_t)
            self._last_pow = vpow
        self._last_t = t
        self.samples += 1

    def report(self) -> float:
        if math.isinf(self.r):
            return self.running_max
        return self.running_integral ** (1.0 / self.r)


def accumulate_mixed(acc: MixedNormAccumulator, field_norm_now: float,
                     t_now: float) -> MixedNormAccumulator:
    acc.update(field_norm_now, t_now)
    return acc


# ---------------------------------------------------------------------------
# criterion report

GRAD_U = "grad_u"
LAP_Q = "lap_Q"
VEL = "u"
GRAD_Q = "grad_Q"
DT_Q = "dt_Q"

_LABEL_ORDER = (GRAD_U, LAP_Q, VEL, GRAD_Q, DT_Q)

# admissible spatial-exponent intervals stated for each criterion family
RANGES = {
    "uniqueness": (2.0, 3.0),     # velocity-gradient / Q-Laplacian, weak uniqueness
    "weak_t": (1.5, 3.0),         # same families, weak-t regularity
    "serrin": (3.0, INF),         # velocity / Q-gradient Serrin family
}


def exponent_token(x: float) -> str:
    if math.isinf(x):
        return "inf"
    if float(x) == int(x):
        return str(int(x))
    return f"{x:g}"


def mixed_column_name(label: str, q: float, r: float) -> str:
    return f"mixed_{label}_q{exponent_token(q)}_r{exponent_token(r)}"


@dataclass(frozen=True)
class CriterionEntry:
    family: str
    q: float
    r: float
    value: float
    finite: bool
    in_range: dict


@dataclass(frozen=True)
class GammaEntry:
    q: float
    gamma: float
    lap_q_value: float
    dt_q_value: float


@dataclass(frozen=True)
class CriterionReport:
    entries: tuple
    grad_q_sup_l3: float
    grad_q_l3_l9: float
    gamma_entries: tuple

    def to_text(self) -> str:
        lines = ["criterion monitors (finite-norm bookkeeping only)"]
        lines.append(f"{'family':>8} {'q':>6} {'r':>8} {'value':>14}  range flags")
        for e in self.entries:
            flags = " ".join(f"{k}={'ok' if v else 'out'}" for k, v in e.in_range.items())
            lines.append(f"{e.family:>8} {exponent_token(e.q):>6} {exponent_token(e.r):>8} "
                         f"{e.value:>14.6e}  {flags}")
        lines.append(f"q-gradient conclusion pair: sup-in-time L3 = {self.grad_q_sup_l3:.6e}, "
                     f"L3-in-time L9 = {self.grad_q_l3_l9:.6e}")
        lines.append(f"{'q':>6} {'gamma':>8} {'lapQ L^g L^g':>14} {'dtQ L^g L^g':>14}")
        for g in self.gamma_entries:
            lines.append(f"{exponent_token(g.q):>6} {exponent_token(g.gamma):>8} "
                         f"{g.lap_q_value:>14.6e} {g.dt_q_value:>14.6e}")
        return "\n".join(lines)


def required_keys(q_list, u_p_list=(3.0, 4.0, INF), grad_q_list=(3.0, 4.0, INF)):
    """Every (label, q, r) accumulator key the report consumes, in column order."""
    keys = []

    def add(k):
        if k not in keys:
            keys.append(k)

    for q in q_list:
        add((GRAD_U, float(q), bochner_conjugate(q)))
    for s in q_list:
        add((LAP_Q, float(s), bochner_conjugate(s)))
    for p in u_p_list:
        add((VEL, float(p), serrin_conjugate(p)))
    for r in grad_q_list:
        add((GRAD_Q, float(r), serrin_conjugate(r)))
    add((GRAD_Q, 3.0, INF))
    add((GRAD_Q, 9.0, 3.0))
    for q in q_list:
        g = derived_gamma(q)
        add((LAP_Q, g, g))
        add((DT_Q, g, g))
    keys.sort(key=lambda k: (_LABEL_ORDER.index(k[0]), k[1], k[2]))
    return keys


def _in_interval(q, lo, hi):
    return lo <= q <= hi


def criterion_report(values, q_list, u_p_list=(3.0, 4.0, INF),
                     grad_q_list=(3.0, 4.0, INF)) -> CriterionReport:
    """Assemble the criterion table from accumulated mixed-norm values.

    `values` maps (label, q, r) keys to accumulated report values.  Missing
    keys raise KeyError naming the absent accumulator.  Pure bookkeeping: the
    report states which norms are finite, it decides nothing about uniqueness.
    """

    def get(key):
        if key not in values:
            raise KeyError(f"missing accumulator {mixed_column_name(*key)}")
        return float(values[key])

    entries = []
    for q in q_list:
        q = float(q)
        r = bochner_conjugate(q)
        v = get((GRAD_U, q, r))
        entries.append(CriterionEntry(GRAD_U, q, r, v, math.isfinite(v), {
            "uniqueness": _in_interval(q, *RANGES["uniqueness"]),
            "weak_t": _in_interval(q, *RANGES["weak_t"]),
        }))
    for s in q_list:
        s = float(s)
        r = bochner_conjugate(s)
        v = get((LAP_Q, s, r))
        entries.append(CriterionEntry(LAP_Q, s, r, v, math.isfinite(v), {
            "uniqueness": _in_interval(s, *RANGES["uniqueness"]),
            "weak_t": _in_interval(s, *RANGES["weak_t"]),
        }))
    for p in u_p_list:
        p = float(p)
        r = serrin_conjugate(p)
        v = get((VEL, p, r))
        entries.append(CriterionEntry(VEL, p, r, v, math.isfinite(v),
                                      {"serrin": _in_interval(p, *RANGES["serrin"])}))
    for rq in grad_q_list:
        rq = float(rq)
        r = serrin_conjugate(rq)
        v = get((GRAD_Q, rq, r))
        entries.append(CriterionEntry(GRAD_Q, rq, r, v, math.isfinite(v),
                                      {"serrin": _in_interval(rq, *RANGES["serrin"])}))

    gamma_entries = []
    for q in q_list:
        g = derived_gamma(float(q))
        gamma_entries.append(GammaEntry(float(q), g, get((LAP_Q, g, g)), get((DT_Q, g, g))))

    return CriterionReport(
        entries=tuple(entries),
        grad_q_sup_l3=get((GRAD_Q, 3.0, INF)),
        grad_q_l3_l9=get((GRAD_Q, 9.0, 3.0)),
        gamma_entries=tuple(gamma_entries),
    )


# ---------------------------------------------------------------------------
# per-run engine: hook + CSV time series

def _fmt(v: float) -> str:
    return f"{v:.17g}"


class DiagnosticsEngine:
    """Step hook computing the ledger, feeding accumulators, writing the CSV.

    One row per completed step; the initial state primes the accumulators but
    writes no row.  Columns are exactly the ledger fields followed by the
    mixed-norm columns (named mixed_<label>_q<q>_r<r>).
    """

    def __init__(self, params, variants, q_list=(2.0, 2.5, 3.0),
                 u_p_list=(3.0, 4.0, INF), grad_q_list=(3.0, 4.0, INF),
                 csv_path=None, header_comments=()):
        self.params = params
        self.variants = variants
        self.q_list = tuple(float(q) for q in q_list)
        self.u_p_list = tuple(float(p) for p in u_p_list)
        self.grad_q_list = tuple(float(r) for r in grad_q_list)
        self.keys = required_keys(self.q_list, self.u_p_list, self.grad_q_list)
        self.accumulators = {k: MixedNormAccumulator(*k) for k in self.keys}
        self.records: list[DiagnosticsRecord] = []
        self.step_dts: list[float] = []
        self._prev_q_data = None
        self._prev_t = None
        self._csv_path = Path(csv_path) if csv_path else None
        self._csv_file = None
        self._header_comments = tuple(header_comments)

    # -- norms shared across accumulators of one label
    def _norms(self, state, dt_q_mag=None):
        grid = state.u.grid
        vol = grid.cell_volume
        mags = {}
        by_label = {}
        for (label, q, r) in self.keys:
            by_label.setdefault(label, set()).add(q)
        out = {}
        for label, qs in by_label.items():
            if label == GRAD_U:
                mags[label] = _magnitude(vector_gradient(state.u, FieldRole.VELOCITY))
            elif label == LAP_Q:
                mags[label] = _magnitude(laplacian(state.Q, FieldRole.Q_TENSOR))
            elif label == VEL:
                mags[label] = _magnitude(state.u)
            elif label == GRAD_Q:
                mags[label] = grad_q_magnitude(state.Q)
            elif label == DT_Q:
                if dt_q_mag is None:
                    continue
                mags[label] = dt_q_mag
            for q in qs:
                out[(label, q)] = lp_norm_of_magnitude(mags[label], q, vol)
        return out

    def prime(self, state):
        """Take the t = 0 sample; must be called once before stepping."""
        norms = self._norms(state)
        for key, acc in self.accumulators.items():
            label, q, _ = key
            if label == DT_Q:
                continue
            acc.update(norms[(label, q)], state.t)
        self._prev_q_data = state.Q.data.copy()
        self._prev_t = state.t
        self._open_csv()

    def observe(self, state) -> DiagnosticsRecord:
        rec = energy_ledger(state, self.params, self.variants)
        dt_q_mag = None
        if self._prev_q_data is not None and state.t > self._prev_t:
            dt = state.t - self._prev_t
            diff = (state.Q.data - self._prev_q_data) / dt
            dt_q_mag = np.sqrt(np.einsum("ij...,ij...->...", diff, diff))
            self.step_dts.append(dt)
        norms = self._norms(state, dt_q_mag)
        for key, acc in self.accumulators.items():
            label, q, _ = key
            if (label, q) in norms:
                acc.update(norms[(label, q)], state.t)
        self._prev_q_data = state.Q.data.copy()
        self._prev_t = state.t
        self.records.append(rec)
        self._write_row(rec)
        return rec

    def __call__(self, state):
        self.observe(state)

    # -- reporting
    def values(self):
        return {k: acc.report() for k, acc in self.accumulators.items()}

    def report(self) -> CriterionReport:
        return criterion_report(self.values(), self.q_list, self.u_p_list,
                                self.grad_q_list)

    def max_energy_residual(self) -> float:
        worst = 0.0
        for i in range(1, len(self.records)):
            worst = max(worst, energy_residual(self.records[i - 1], self.records[i],
                                               self.step_dts[i - 1]))
        return worst

    # -- CSV plumbing
    def column_names(self):
        return list(RECORD_FIELDS) + [mixed_column_name(*k) for k in self.keys]

    def _open_csv(self):
        if self._csv_path is None or self._csv_file is not None:
            return
        self._csv_path.parent.mkdir(parents=True, exist_ok=True)
        self._csv_file = open(self._csv_path, "w", encoding="utf-8")
        for line in self._header_comments:
            self._csv_file.write(f"# {line}\n")
        self._csv_file.write(",".join(self.column_names()) + "\n")
        self._csv_file.flush()

    def _write_row(self, rec: DiagnosticsRecord):
        if self._csv_path is None:
            return
        self._open_csv()
        vals = [getattr(rec, name) for name in RECORD_FIELDS]
        vals += [self.accumulators[k].report() for k in self.keys]
        self._csv_file.write(",".join(_fmt(v) for v in vals) + "\n")
        self._csv_file.flush()

    def close(self):
        if self._csv_file is not None:
            self._csv_file.close()
            self._csv_file = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_mixed_column(name: str):
    """Inverse of mixed_column_name; returns (label, q, r) or None."""
    if not name.startswith("mixed_"):
        return None
    try:
        rest = name[len("mixed_"):]
        body, rtok = rest.rsplit("_r", 1)
        label, qtok = body.rsplit("_q", 1)
        return (label, float(qtok), float(rtok))
    except ValueError:
        return None


def load_csv_values(path):
    """Read a diagnostics CSV; return (accumulator values from the last row, row count).

    A header-only file yields all-zero values for every mixed column present.
    """
    header = None
    last = None
    nrows = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            last = line.split(",")
            nrows += 1
    if header is None:
        raise ValueError(f"{path}: no header row found")
    values = {}
    for idx, name in enumerate(header):
        key = parse_mixed_column(name)
        if key is None:
            continue
        values[key] = float(last[idx]) if last is not None else 0.0
    return values, nrows
