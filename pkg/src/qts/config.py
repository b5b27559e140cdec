"""Run configuration: plain block-structured text, parse-then-validate.

Format: `[block]` headers with `key = value` lines; `#` starts a comment.
Every violation is collected and reported with its file and line, and a
serialized configuration parses back to an identical one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .fields import (FaceBC, GridSpec, ModelParams, Potential, Stretching,
                     VariantConfig)
from .presets import PRESET_NAMES

INF = math.inf


@dataclass(frozen=True)
class TimeConfig:
    t_end: float
    dt_min: float
    dt_max: float
    cfl: float = 0.5
    viscous_implicit: bool = False
    upwind: bool = False


@dataclass(frozen=True)
class ICConfig:
    preset: str | None = None
    snapshot: str | None = None
    q_amplitude: float = 0.3
    u_amplitude: float = 0.05
    modes: int = 2
    seed: int = 1234
    director: tuple = (1.0, 1.0, 0.0)


@dataclass(frozen=True)
class DiagnosticsConfig:
    q_list: tuple = (2.0, 2.5, 3.0)
    u_p_list: tuple = (3.0, 4.0, INF)
    grad_q_list: tuple = (3.0, 4.0, INF)
    csv: str = "diagnostics.csv"
    snapshot_every: int = 0
    snapshot_prefix: str = "state"


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    params: ModelParams
    variants: VariantConfig
    time: TimeConfig
    ic: ICConfig
    diagnostics: DiagnosticsConfig


_BLOCKS = ("grid", "params", "variants", "time", "ic", "diagnostics")


def _parse_blocks(text: str, source: str):
    """Raw pass: {block: {key: (raw_value, line_number)}} plus parse problems."""
    blocks: dict = {}
    problems: list[str] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _BLOCKS:
                problems.append(f"{source}:{lineno}: unknown block [{name}]")
                current = None
            else:
                current = blocks.setdefault(name, {})
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            continue
        if current is None:
            problems.append(f"{source}:{lineno}: key outside any known block")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in current:
            problems.append(f"{source}:{lineno}: duplicate key {key!r}")
        current[key] = (value, lineno)
    return blocks, problems


class _BlockReader:
    def __init__(self, name, raw, source, problems):
        self.name = name
        self.raw = dict(raw)
        self.source = source
        self.problems = problems

    def _take(self, key, required, default):
        if key not in self.raw:
            if required:
                self.problems.append(
                    f"{self.source}: [{self.name}] missing required key {key!r}")
            return None, None
        value, lineno = self.raw.pop(key)
        return value, lineno

    def err(self, lineno, msg):
        where = f"{self.source}:{lineno}" if lineno else self.source
        self.problems.append(f"{where}: [{self.name}] {msg}")

    def value(self, key, conv, required=False, default=None, check=None):
        raw, lineno = self._take(key, required, default)
        if raw is None:
            return default
        try:
            val = conv(raw)
        except ValueError as exc:
            self.err(lineno, f"{key}: {exc}")
            return default
        if check is not None:
            msg = check(val)
            if msg:
                self.err(lineno, f"{key}: {msg}")
                return default
        return val

    def finish(self):
        for key, (_, lineno) in self.raw.items():
            self.err(lineno, f"unknown key {key!r}")


def _to_int(raw):
    return int(raw)


def _to_float(raw):
    if raw.lower() in ("inf", "+inf", "infinity"):
        return INF
    return float(raw)


def _to_bool(raw):
    low = raw.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _to_floats(raw):
    return tuple(_to_float(tok.strip()) for tok in raw.split(",") if tok.strip())


def _to_bc(raw):
    try:
        return FaceBC(raw.lower())
    except ValueError:
        raise ValueError(f"expected 'wall' or 'periodic', got {raw!r}") from None


def _to_stretching(raw):
    try:
        return Stretching(raw.lower())
    except ValueError:
        raise ValueError("expected 'corotational' or 'full_gradient'") from None


def _to_potential(raw):
    try:
        return Potential(raw.lower())
    except ValueError:
        raise ValueError("expected one of 'ff', 'fz', 'm1'") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    blocks, problems = _parse_blocks(text, source)
    for name in _BLOCKS:
        if name not in blocks and name in ("grid", "params", "time", "ic"):
            problems.append(f"{source}: missing required block [{name}]")
    if problems:
        raise ConfigError(problems)

    def positive(v):
        return None if v > 0 else f"must be > 0, got {v}"

    g = _BlockReader("grid", blocks.get("grid", {}), source, problems)
    nx = g.value("nx", _to_int, required=True, check=positive)
    ny = g.value("ny", _to_int, required=True, check=positive)
    nz = g.value("nz", _to_int, required=True, check=positive)
    lx = g.value("lx", _to_float, required=True, check=positive)
    ly = g.value("ly", _to_float, required=True, check=positive)
    lz = g.value("lz", _to_float, required=True, check=positive)
    bc_x = g.value("bc_x", _to_bc, default=FaceBC.PERIODIC)
    bc_y = g.value("bc_y", _to_bc, default=FaceBC.PERIODIC)
    bc_z = g.value("bc_z", _to_bc, default=FaceBC.PERIODIC)
    g.finish()

    p = _BlockReader("params", blocks.get("params", {}), source, problems)
    nu = p.value("nu", _to_float, required=True,
                 check=lambda v: None if v > 0 else f"nu > 0 required, got {v}")
    gamma = p.value("gamma", _to_float, required=True,
                    check=lambda v: None if v > 0 else f"gamma > 0 required, got {v}")
    epsilon = p.value("epsilon", _to_float, required=True,
                      check=lambda v: None if v > 0 else f"epsilon > 0 required, got {v}")
    a_val = p.value("a", _to_float, required=True)
    b_val = p.value("b", _to_float, required=True)
    c_val = p.value("c", _to_float, required=True,
                    check=lambda v: None if v > 0 else f"c > 0 required, got {v}")
    p.finish()

    v = _BlockReader("variants", blocks.get("variants", {}), source, problems)
    stretching = v.value("stretching", _to_stretching, default=Stretching.COROTATIONAL)
    potential = v.value("potential", _to_potential, default=Potential.FZ)
    m1_theta = v.value("m1_theta", _to_float, default=1.0,
                       check=lambda x: None if 0 <= x <= 1 else f"must lie in [0, 1], got {x}")
    v.finish()

    t = _BlockReader("time", blocks.get("time", {}), source, problems)
    t_end = t.value("t_end", _to_float, required=True, check=positive)
    dt_min = t.value("dt_min", _to_float, required=True, check=positive)
    dt_max = t.value("dt_max", _to_float, required=True, check=positive)
    cfl = t.value("cfl", _to_float, default=0.5,
                  check=lambda x: None if 0 < x <= 1 else f"must lie in (0, 1], got {x}")
    viscous_implicit = t.value("viscous_implicit", _to_bool, default=False)
    upwind = t.value("upwind", _to_bool, default=False)
    t.finish()
    if dt_min is not None and dt_max is not None and dt_min > dt_max:
        problems.append(f"{source}: [time] dt_min must not exceed dt_max")

    i = _BlockReader("ic", blocks.get("ic", {}), source, problems)
    preset = i.value("preset", str)
    snapshot = i.value("snapshot", str)
    q_amp = i.value("q_amplitude", _to_float, default=0.3,
                    check=lambda x: None if x >= 0 else "must be >= 0")
    u_amp = i.value("u_amplitude", _to_float, default=0.05,
                    check=lambda x: None if x >= 0 else "must be >= 0")
    modes = i.value("modes", _to_int, default=2, check=positive)
    seed = i.value("seed", _to_int, default=1234,
                   check=lambda x: None if 0 <= x < 2 ** 64 else "must fit in u64")
    director = i.value("director", _to_floats, default=(1.0, 1.0, 0.0),
                       check=lambda x: None if len(x) == 3 else "expected three components")
    i.finish()
    if preset is None and snapshot is None:
        problems.append(f"{source}: [ic] needs 'preset' or 'snapshot'")
    if preset is not None and snapshot is not None:
        problems.append(f"{source}: [ic] 'preset' and 'snapshot' are mutually exclusive")
    if preset is not None and preset not in PRESET_NAMES:
        problems.append(f"{source}: [ic] unknown preset {preset!r}; choose from {PRESET_NAMES}")

    d = _BlockReader("diagnostics", blocks.get("diagnostics", {}), source, problems)
    q_list = d.value("q_list", _to_floats, default=(2.0, 2.5, 3.0),
                     check=lambda xs: None if all(x >= 1.5 for x in xs)
                     else "criterion exponents must be >= 3/2")
    u_p_list = d.value("u_p_list", _to_floats, default=(3.0, 4.0, INF),
                       check=lambda xs: None if all(x >= 3 for x in xs)
                       else "velocity-family exponents must be >= 3")
    grad_q_list = d.value("grad_q_list", _to_floats, default=(3.0, 4.0, INF),
                          check=lambda xs: None if all(x >= 3 for x in xs)
                          else "gradient-family exponents must be >= 3")
    csv = d.value("csv", str, default="diagnostics.csv")
    snapshot_every = d.value("snapshot_every", _to_int, default=0,
                             check=lambda x: None if x >= 0 else "must be >= 0")
    snapshot_prefix = d.value("snapshot_prefix", str, default="state")
    d.finish()

    if problems:
        raise ConfigError(problems)

    try:
        grid = GridSpec(nx, ny, nz, lx, ly, lz, bc_x, bc_y, bc_z)
    except ValueError as exc:
        raise ConfigError([f"{source}: [grid] {exc}"]) from None
    params = ModelParams(nu, gamma, epsilon, a_val, b_val, c_val)
    variants = VariantConfig(stretching, potential, m1_theta)
    time_cfg = TimeConfig(t_end, dt_min, dt_max, cfl, viscous_implicit, upwind)
    ic = ICConfig(preset, snapshot, q_amp, u_amp, modes, seed, tuple(director))
    diag = DiagnosticsConfig(tuple(q_list), tuple(u_p_list), tuple(grad_q_list),
                             csv, snapshot_every, snapshot_prefix)
    return RunConfig(grid, params, variants, time_cfg, ic, diag)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"config not found or unreadable: {exc}"]) from None
    return parse_config(text, source=str(path))


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    if isinstance(v, (FaceBC, Stretching, Potential)):
        return v.value
    if isinstance(v, tuple):
        return ", ".join(_fmt_value(x) for x in v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    g, p, v, t, i, d = cfg.grid, cfg.params, cfg.variants, cfg.time, cfg.ic, cfg.diagnostics
    lines = ["[grid]"]
    for key in ("nx", "ny", "nz", "lx", "ly", "lz", "bc_x", "bc_y", "bc_z"):
        lines.append(f"{key} = {_fmt_value(getattr(g, key))}")
    lines.append("")
    lines.append("[params]")
    for key in ("nu", "gamma", "epsilon", "a", "b", "c"):
        lines.append(f"{key} = {_fmt_value(getattr(p, key))}")
    lines.append("")
    lines.append("[variants]")
    lines.append(f"stretching = {_fmt_value(v.stretching)}")
    lines.append(f"potential = {_fmt_value(v.potential)}")
    lines.append(f"m1_theta = {_fmt_value(v.m1_theta)}")
    lines.append("")
    lines.append("[time]")
    for key in ("t_end", "dt_min", "dt_max", "cfl", "viscous_implicit", "upwind"):
        lines.append(f"{key} = {_fmt_value(getattr(t, key))}")
    lines.append("")
    lines.append("[ic]")
    if i.preset is not None:
        lines.append(f"preset = {i.preset}")
    if i.snapshot is not None:
        lines.append(f"snapshot = {i.snapshot}")
    for key in ("q_amplitude", "u_amplitude", "modes", "seed", "director"):
        lines.append(f"{key} = {_fmt_value(getattr(i, key))}")
    lines.append("")
    lines.append("[diagnostics]")
    for key in ("q_list", "u_p_list", "grad_q_list", "csv", "snapshot_every",
                "snapshot_prefix"):
        lines.append(f"{key} = {_fmt_value(getattr(d, key))}")
    lines.append("")
    return "\n".join(lines)
