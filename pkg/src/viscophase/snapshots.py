"""Raw binary snapshot files.

Layout (all little-endian): 4-byte magic b"VPF1"; int32 d; int32 n_x, n_y,
n_z (unused dimensions 1); float64 L_x, L_y, L_z (unused 0); int32 field
count; per field an int32 name length and the UTF-8 name; then the field
payloads as contiguous float64 arrays in C order, one per name.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

MAGIC = b"VPF1"

__all__ = ["SnapshotHeader", "write_snapshot", "read_snapshot",
           "write_state", "MAGIC"]


@dataclass(frozen=True)
class SnapshotHeader:
    shape: Tuple[int, ...]
    lengths: Tuple[float, ...]

    @property
    def d(self) -> int:
        return len(self.shape)


def write_snapshot(path, shape, lengths, fields: Dict[str, np.ndarray]) -> None:
    shape = tuple(int(n) for n in shape)
    lengths = tuple(float(L) for L in lengths)
    d = len(shape)
    if d not in (1, 2, 3) or len(lengths) != d:
        raise ValueError("snapshot supports 1-3 dimensions")
    ns = shape + (1,) * (3 - d)
    Ls = lengths + (0.0,) * (3 - d)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<i", d))
        fh.write(struct.pack("<3i", *ns))
        fh.write(struct.pack("<3d", *Ls))
        fh.write(struct.pack("<i", len(fields)))
        for name in fields:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<i", len(raw)))
            fh.write(raw)
        for name, data in fields.items():
            arr = np.ascontiguousarray(np.asarray(data, dtype="<f8"))
            if arr.shape != shape:
                raise ValueError(f"field {name!r} shape {arr.shape} != {shape}")
            fh.write(arr.tobytes())


def read_snapshot(path):
    """Returns (SnapshotHeader, {name: array})."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a VPF1 snapshot")
        (d,) = struct.unpack("<i", fh.read(4))
        ns = struct.unpack("<3i", fh.read(12))
        Ls = struct.unpack("<3d", fh.read(24))
        (count,) = struct.unpack("<i", fh.read(4))
        names = []
        for _ in range(count):
            (ln,) = struct.unpack("<i", fh.read(4))
            names.append(fh.read(ln).decode("utf-8"))
        shape = ns[:d]
        size = int(np.prod(shape))
        fields = {}
        for name in names:
            buf = fh.read(8 * size)
            fields[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return SnapshotHeader(shape=shape, lengths=Ls[:d]), fields


def write_state(path, state) -> None:
    """One file per state: phi, q, velocity components, p, mu."""
    grid = state.grid
    fields = {"phi": state.phi.data, "q": state.q.data}
    for i in range(grid.d):
        fields["u_" + "xyz"[i]] = state.u.data[i]
    fields["p"] = state.p.data
    fields["mu"] = state.mu.data
    write_snapshot(path, grid.shape, grid.lengths, fields)
