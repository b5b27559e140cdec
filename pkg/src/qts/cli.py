"""Command-line entry point: simulate, verify, report."""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .config import ICConfig, load_config, serialize_config
from .diagnostics import (INF, DiagnosticsEngine, criterion_report,
                          load_csv_values)
from .errors import ConfigError, NonFiniteStateError, QtsError, SolverDivergedError
from .fields import (FaceBC, GridSpec, ModelParams, Potential, Stretching,
                     VariantConfig)
from .operators import default_thread_count, set_num_threads
from .presets import initial_state, preset_uniaxial_cosine
from .snapshot import read_snapshot, write_snapshot
from .solver import SimState, StepControl, run
from .verification import (convergence_study, periodic_case, run_forced,
                           walled_case)


def _add_common(sub):
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads for the transforms (default: QTS_THREADS or all cores)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the configured random seed")
    sub.add_argument("--out", type=Path, default=Path("."),
                     help="output directory (default: current directory)")


def _setup_threads(args):
    n = args.threads
    if n is None:
        env = os.environ.get("QTS_THREADS")
        if env is not None:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError([f"QTS_THREADS must be an integer, got {env!r}"]) from None
    if n is None:
        n = default_thread_count()
    set_num_threads(n)


def _build_state(cfg, out_dir: Path) -> SimState:
    ic = cfg.ic
    if ic.snapshot is not None:
        return read_snapshot(ic.snapshot, cfg.grid)
    return initial_state(cfg.grid, ic.preset, q_amplitude=ic.q_amplitude,
                         u_amplitude=ic.u_amplitude, modes=ic.modes,
                         seed=ic.seed, director=ic.director)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, ic=replace(cfg.ic, seed=args.seed))
    out_dir: Path = args.out
    out_dir.mkdir(parents=True, exist_ok=True)

    state = _build_state(cfg, out_dir)
    ctrl = StepControl(dt=cfg.time.dt_max, dt_min=cfg.time.dt_min,
                       dt_max=cfg.time.dt_max, cfl_target=cfg.time.cfl,
                       viscous_implicit=cfg.time.viscous_implicit,
                       upwind=cfg.time.upwind)

    engine = DiagnosticsEngine(
        cfg.params, cfg.variants, q_list=cfg.diagnostics.q_list,
        u_p_list=cfg.diagnostics.u_p_list, grad_q_list=cfg.diagnostics.grad_q_list,
        csv_path=out_dir / cfg.diagnostics.csv,
        header_comments=serialize_config(cfg).splitlines(),
    )
    engine.prime(state)

    hooks = [engine]
    prefix = cfg.diagnostics.snapshot_prefix
    if cfg.diagnostics.snapshot_every > 0:
        every = cfg.diagnostics.snapshot_every

        def snapshot_hook(s):
            if s.step_index % every == 0:
                write_snapshot(out_dir / f"{prefix}_{s.step_index:06d}.qts1", s)

        hooks.append(snapshot_hook)

    crash_path = out_dir / f"{prefix}_last_good.qts1"
    try:
        final = run(state, cfg.params, cfg.variants, ctrl, cfg.time.t_end,
                    hooks=hooks, crash_snapshot_path=crash_path)
    finally:
        engine.close()
    write_snapshot(out_dir / f"{prefix}_final.qts1", final)

    print(f"completed {final.step_index} steps to t = {final.t:.6g}")
    print(f"diagnostics: {out_dir / cfg.diagnostics.csv}")
    if engine.records:
        print(f"max normalized energy residual: {engine.max_energy_residual():.3e}")
    return 0


def _check(name: str, value: float, tol: float, asserted: bool = True) -> bool:
    ok = value <= tol
    if asserted:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3e} (tol {tol:.1e})")
        return ok
    print(f"INFO {name}: {value:.3e} (reported, not asserted)")
    return True


_VARIANTS = [(p, s) for p in (Potential.FF, Potential.FZ, Potential.M1)
             for s in (Stretching.COROTATIONAL, Stretching.FULL_GRADIENT)]


def _mms_params():
    return ModelParams(nu=0.05, gamma=1.0, epsilon=0.01, a=-0.2, b=0.5, c=1.0)


def cmd_verify_mms(args) -> int:
    ok = True
    params = _mms_params()
    tol = 10 * 1e-10

    if args.forcing in ("discrete", "both"):
        for case_fn, bc in ((periodic_case, FaceBC.PERIODIC), (walled_case, FaceBC.WALL)):
            case = case_fn()
            grid = GridSpec(16, 16, 1, 1.0, 1.0, 1.0, bc, bc, FaceBC.PERIODIC)
            for potential, stretching in _VARIANTS:
                variants = VariantConfig(stretching, potential)
                _, point = run_forced(case, grid, params, variants, dt=2e-3,
                                      t_end=0.04, forcing_kind="discrete")
                name = (f"mms discrete {case.name} {potential.value}"
                        f"+{stretching.value} max deviation")
                ok &= _check(name, point.max_dev, tol)

    if args.forcing in ("continuous", "both"):
        variants = VariantConfig(Stretching.COROTATIONAL, Potential.FZ)
        for case_fn, bc in ((periodic_case, FaceBC.PERIODIC), (walled_case, FaceBC.WALL)):
            case = case_fn()

            def grid_of(n):
                return GridSpec(n, n, 1, 1.0, 1.0, 1.0, bc, bc, FaceBC.PERIODIC)

            ladder = [(grid_of(n), 4e-4 * (16 / n) ** 2) for n in (16, 24, 32)]
            table = convergence_study(case, params, variants, ladder, t_end=0.05,
                                      forcing_kind="continuous", axis="h")
            print(table.to_text())
            for label, order in (("u", table.order_u), ("Q", table.order_q)):
                good = abs(order - 2.0) <= 0.2
                ok &= good
                print(f"{'PASS' if good else 'FAIL'} mms continuous {case.name} "
                      f"spatial order {label}: {order:.2f} (target 2.0 +- 0.2)")

            grid = grid_of(48)
            ladder = [(grid, dt) for dt in (2e-2, 1e-2, 5e-3)]
            table = convergence_study(case, params, variants, ladder, t_end=0.2,
                                      forcing_kind="continuous", axis="dt")
            print(table.to_text())
            for label, order in (("u", table.order_u), ("Q", table.order_q)):
                good = abs(order - 1.0) <= 0.2
                ok &= good
                print(f"{'PASS' if good else 'FAIL'} mms continuous {case.name} "
                      f"temporal order {label}: {order:.2f} (target 1.0 +- 0.2)")
    return 0 if ok else 1


def cmd_verify_invariants(args) -> int:
    potential = Potential(args.potential)
    stretching = Stretching(args.stretching)
    variants = VariantConfig(stretching, potential)
    params = ModelParams(nu=0.02, gamma=1.0, epsilon=0.002, a=-0.3, b=1.0, c=1.0)
    grid = GridSpec(32, 32, 1, 1.0, 1.0, 1.0)
    state = preset_uniaxial_cosine(grid, q_amplitude=0.3, director=(1.0, 1.0, 0.0),
                                   u_amplitude=0.05)
    dt = 2e-3
    ctrl = StepControl(dt=dt, dt_min=dt, dt_max=dt, cfl_target=0.9)
    engine = DiagnosticsEngine(params, variants)
    engine.prime(state)
    final = run(state, params, variants, ctrl, t_end=args.steps * dt, hooks=[engine])

    ok = True
    sup_q = max(r.sup_Q for r in engine.records)
    trace = max(r.trace_drift for r in engine.records)
    sym = max(r.sym_drift for r in engine.records)
    preserves_trace = potential in (Potential.FZ, Potential.M1)
    preserves_sym = stretching is Stretching.COROTATIONAL
    ok &= _check("trace drift / sup|Q|", trace / max(sup_q, 1e-30), 1e-10,
                 asserted=preserves_trace)
    ok &= _check("symmetry drift / sup|Q|", sym / max(sup_q, 1e-30), 1e-10,
                 asserted=preserves_sym)
    ok &= _check("max energy residual", engine.max_energy_residual(), 0.05)

    div_rel = 0.0
    for r in engine.records:
        u_l2 = math.sqrt(2.0 * r.e_kinetic)
        div_rel = max(div_rel, r.div_u_L2 / (u_l2 / grid.min_spacing() + 1e-30))
    ok &= _check("divergence / (|u|/h)", div_rel, 1e-8)

    # zero-tensor reduction: coupled run from Q0 = 0 stays plain Navier-Stokes
    from .presets import preset_taylor_green_q0
    s0 = preset_taylor_green_q0(grid, u_amplitude=0.05)
    coupled = run(s0.copy(), params, variants, ctrl, t_end=20 * dt)
    plain = run(s0.copy(), params, variants, ctrl, t_end=20 * dt, couple_q=False)
    u_scale = float(np.abs(plain.u.data).max())
    u_dev = float(np.abs(coupled.u.data - plain.u.data).max()) / max(u_scale, 1e-30)
    ok &= _check("zero-tensor reduction u deviation", u_dev, 1e-12)
    ok &= _check("zero-tensor reduction sup|Q|", float(np.abs(coupled.Q.data).max()), 0.0)
    return 0 if ok else 1


def cmd_report(args) -> int:
    values, nrows = load_csv_values(args.csv)
    q_list = tuple(float(tok) for tok in args.q_list.split(","))
    u_p_list = sorted({q for (label, q, _r) in values if label == diag.VEL})
    grad_q_list = sorted({q for (label, q, _r) in values if label == diag.GRAD_Q})
    try:
        report = criterion_report(values, q_list, u_p_list or (3.0,),
                                  grad_q_list or (3.0,))
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 2
    print(f"rows: {nrows}")
    print(report.to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qts",
        description="Coupled flow / order-tensor simulator with dissipation and "
                    "regularity-criterion diagnostics")
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="run a configured simulation")
    sim.add_argument("--config", type=Path, required=True)
    _add_common(sim)
    sim.set_defaults(func=cmd_simulate)

    ver = subs.add_parser("verify", help="run the verification suites")
    ver_subs = ver.add_subparsers(dest="suite", required=True)
    mms = ver_subs.add_parser("mms", help="manufactured-solution checks")
    mms.add_argument("--forcing", choices=("discrete", "continuous", "both"),
                     default="discrete")
    _add_common(mms)
    mms.set_defaults(func=cmd_verify_mms)
    inv = ver_subs.add_parser("invariants", help="preservation and reduction checks")
    inv.add_argument("--potential", choices=[p.value for p in Potential], default="fz")
    inv.add_argument("--stretching", choices=[s.value for s in Stretching],
                     default="corotational")
    inv.add_argument("--steps", type=int, default=100)
    _add_common(inv)
    inv.set_defaults(func=cmd_verify_invariants)

    rep = subs.add_parser("report", help="criterion report from a diagnostics CSV")
    rep.add_argument("--csv", type=Path, required=True)
    rep.add_argument("--q-list", default="2,2.5,3")
    _add_common(rep)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_threads(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NonFiniteStateError, SolverDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
