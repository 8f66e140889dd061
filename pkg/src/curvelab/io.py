"""Binary and text formats: GMH1 field snapshots, PBM masks, CSV records.

GMH1 layout: magic bytes ``GMH1``, little-endian u32 nx, u32 ny, f64 dx,
f64 origin_x, f64 origin_y, f64 time, then nx*ny f64 node values row-major.
Masks round-trip through binary PBM (P4) plus a JSON sidecar carrying the
grid metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import Grid2D, GridSet

__all__ = [
    "write_gmh1",
    "read_gmh1",
    "write_mask",
    "read_mask",
    "float_repr",
    "write_records_csv",
]

_GMH1_HEADER = struct.Struct("<4sII4d")


def write_gmh1(path, grid: Grid2D, u: np.ndarray, time: float) -> None:
    if u.shape != grid.shape:
        raise ValueError("field shape does not match grid")
    with open(path, "wb") as fh:
        fh.write(
            _GMH1_HEADER.pack(
                b"GMH1", grid.nx, grid.ny, grid.dx, grid.origin[0], grid.origin[1], time
            )
        )
        fh.write(np.ascontiguousarray(u, dtype="<f8").tobytes())


def read_gmh1(path) -> tuple[Grid2D, np.ndarray, float]:
    with open(path, "rb") as fh:
        head = fh.read(_GMH1_HEADER.size)
        magic, nx, ny, dx, ox, oy, time = _GMH1_HEADER.unpack(head)
        if magic != b"GMH1":
            raise ValueError(f"{path}: not a GMH1 file")
        data = np.frombuffer(fh.read(8 * nx * ny), dtype="<f8").reshape(ny, nx)
    return Grid2D(nx, ny, dx, (ox, oy)), data.copy(), time


def write_mask(path, gset: GridSet, time: float | None = None) -> None:
    """Binary PBM (P4) plus a .json sidecar with grid metadata."""
    path = Path(path)
    grid = gset.grid
    with open(path, "wb") as fh:
        fh.write(f"P4\n{grid.nx} {grid.ny}\n".encode())
        fh.write(np.packbits(gset.mask, axis=1).tobytes())
    sidecar = {
        "schema": 1,
        "nx": grid.nx,
        "ny": grid.ny,
        "dx": grid.dx,
        "origin": list(grid.origin),
    }
    if time is not None:
        sidecar["time"] = time
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def read_mask(path) -> tuple[GridSet, float | None]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P4":
            raise ValueError(f"{path}: not a binary PBM file")
        line = fh.readline()
        while line.startswith(b"#"):
            line = fh.readline()
        nx, ny = (int(v) for v in line.split())
        row_bytes = (nx + 7) // 8
        raw = np.frombuffer(fh.read(row_bytes * ny), dtype=np.uint8).reshape(ny, row_bytes)
    mask = np.unpackbits(raw, axis=1)[:, :nx].astype(bool)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = Grid2D(meta["nx"], meta["ny"], meta["dx"], tuple(meta["origin"]))
    return GridSet(grid, mask), meta.get("time")


def float_repr(x) -> str:
    """Shortest round-trip decimal form; deterministic across platforms."""
    return repr(float(x))


def write_records_csv(path, records: list[dict], columns: list[str]) -> None:
    """Write records with deterministic formatting (floats via repr)."""
    lines = [",".join(columns)]
    for rec in records:
        cells = []
        for col in columns:
            v = rec[col]
            if isinstance(v, bool) or isinstance(v, np.bool_):
                cells.append("1" if v else "0")
            elif isinstance(v, (float, np.floating)):
                cells.append(float_repr(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
