"""Binary Field snapshots and solver checkpoints.

Snapshot layout (little endian):

    b"VTRS"  u32 version  u32 n1  u32 n2  u32 n3  u32 rank  f64 time
    f64 samples, one component block after another, y1 varying fastest.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from .spectral import Field, Grid

MAGIC = b"VTRS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIId")


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode())


def snapshot_bytes(f: Field, t: float = 0.0) -> bytes:
    phys = np.asarray(f.phys, dtype="<f8")
    n1, n2, n3 = f.grid.n
    head = _HEADER.pack(MAGIC, VERSION, n1, n2, n3, f.rank, float(t))
    comps = phys.reshape((-1,) + f.grid.shape)
    body = b"".join(np.asfortranarray(c).tobytes(order="F") for c in comps)
    return head + body


def write_snapshot(path, f: Field, t: float = 0.0):
    atomic_write_bytes(path, snapshot_bytes(f, t))


def read_snapshot(path, dealias="pad3/2"):
    """Returns (Field, t)."""
    raw = Path(path).read_bytes()
    magic, version, n1, n2, n3, rank, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError("not a field snapshot")
    if version != VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    grid = Grid((n1, n2, n3), dealias)
    ncomp = 3**rank
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != ncomp * n1 * n2 * n3:
        raise ValueError("truncated snapshot")
    comps = [data[i * n1 * n2 * n3:(i + 1) * n1 * n2 * n3].reshape((n1, n2, n3), order="F")
             for i in range(ncomp)]
    arr = np.stack(comps).reshape((3,) * rank + (n1, n2, n3)) if rank else comps[0]
    return Field(grid, np.ascontiguousarray(arr, dtype=float)), float(t)


def _jsonable(obj):
    if is_dataclass(obj):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def write_checkpoint(directory, state, scheme=None, prefix="state"):
    """Snapshots of eta, u (and q if present) plus a JSON sidecar; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name in ("eta", "u", "q"):
        f = getattr(state, name, None)
        if f is None:
            continue
        p = directory / f"{prefix}_{name}.vtrs"
        write_snapshot(p, f, state.t)
        paths[name] = p.name
    side = {
        "model": "compressible" if hasattr(state.params, "rho_bar") else "incompressible",
        "t": float(state.t),
        "step_count": int(state.step_count),
        "params": _jsonable(state.params),
        "scheme": _jsonable(scheme) if scheme is not None else None,
        "grid": {"n": list(state.grid.n), "dealias": state.grid.dealias},
        "fields": paths,
    }
    sidecar = directory / f"{prefix}.json"
    atomic_write_text(sidecar, json.dumps(side, indent=2, sort_keys=True))
    return [directory / p for p in paths.values()] + [sidecar]


def read_checkpoint(sidecar):
    """Rebuild a state (history discarded, so order-2 runs re-bootstrap)."""
    from .compressible import CompressibleParams, CompressibleState, PressureLaw
    from .incompressible import FlowParams, FlowState

    sidecar = Path(sidecar)
    side = json.loads(sidecar.read_text())
    dealias = side["grid"]["dealias"]
    fields = {k: read_snapshot(sidecar.parent / v, dealias)[0].to_spectral()
              for k, v in side["fields"].items()}
    if side["model"] == "compressible":
        prm = dict(side["params"])
        prm["pressure"] = PressureLaw(**prm["pressure"])
        return CompressibleState(fields["eta"], fields["u"], side["t"],
                                 CompressibleParams(**prm), side["step_count"])
    return FlowState(fields["eta"], fields["u"], fields["q"], side["t"],
                     FlowParams(**side["params"]), side["step_count"])
