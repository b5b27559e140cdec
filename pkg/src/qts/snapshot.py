"""Binary state snapshots, format "QTS1".

Header: magic "QTS1", version u32, nx ny nz u32, lx ly lz f64, t f64,
little-endian.  Payload: p (nx*ny*nz f64), u (3 component blocks), Q (9
component blocks, row-major component order), each block x-fastest.
Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FieldCorruptionError
from .fields import GridSpec, ScalarField, TensorField, VectorField

MAGIC = b"QTS1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIdddd")


def write_snapshot(path, state) -> None:
    path = Path(path)
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.nx, g.ny, g.nz,
                              g.lx, g.ly, g.lz, state.t))
        fh.write(np.ascontiguousarray(state.p.data.ravel(order="F")).astype("<f8").tobytes())
        for i in range(3):
            fh.write(state.u.data[i].ravel(order="F").astype("<f8").tobytes())
        for i in range(3):
            for j in range(3):
                fh.write(state.Q.data[i, j].ravel(order="F").astype("<f8").tobytes())


def read_header(path) -> tuple[int, int, int, float, float, float, float]:
    """(nx, ny, nz, lx, ly, lz, t) from the snapshot header."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, nx, ny, nz, lx, ly, lz, t = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    return nx, ny, nz, lx, ly, lz, t


def read_snapshot(path, grid: GridSpec):
    """Load a snapshot onto `grid` (face tags live in the run configuration,
    so geometry is validated against the header)."""
    from .solver import SimState

    nx, ny, nz, lx, ly, lz, t = read_header(path)
    if (nx, ny, nz) != grid.counts:
        raise ValueError(f"{path}: snapshot counts {(nx, ny, nz)} do not match "
                         f"grid {grid.counts}")
    if (lx, ly, lz) != grid.lengths:
        raise ValueError(f"{path}: snapshot box {(lx, ly, lz)} does not match "
                         f"grid {grid.lengths}")
    ncell = nx * ny * nz
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        payload = np.frombuffer(fh.read(13 * ncell * 8), dtype="<f8")
    if payload.size != 13 * ncell:
        raise ValueError(f"{path}: truncated snapshot payload")

    def block(k):
        return payload[k * ncell:(k + 1) * ncell].reshape((nx, ny, nz), order="F")

    p = ScalarField(grid, block(0).copy())
    u = VectorField(grid, np.stack([block(1 + i) for i in range(3)]))
    q = TensorField(grid, np.stack([np.stack([block(4 + 3 * i + j) for j in range(3)])
                                    for i in range(3)]))
    state = SimState(u, p, q, t=t)
    if not state.is_finite():
        raise FieldCorruptionError(f"{path}: snapshot holds non-finite values")
    return state
