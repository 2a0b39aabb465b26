import struct

import numpy as np
import pytest

from viscolag.compressible import CompressibleParams, CompressibleState, PressureLaw
from viscolag.incompressible import FlowParams, FlowState, SchemeConfig, step
from viscolag.io import read_checkpoint, read_snapshot, snapshot_bytes, write_checkpoint, write_snapshot
from viscolag.kinematics import make_volume_preserving_eta
from viscolag.spectral import Field, Grid, random_field


@pytest.mark.parametrize("rank", [0, 1, 2])
def test_snapshot_roundtrip(tmp_path, rank):
    g = Grid((8, 10, 12))
    f = random_field(g, rank, seed=rank)
    path = tmp_path / "f.vtrs"
    write_snapshot(path, f, t=1.25)
    back, t = read_snapshot(path)
    assert t == 1.25 and back.grid.n == g.n and back.rank == rank
    assert np.array_equal(back.phys, f.phys)


def test_snapshot_layout(g8):
    f = random_field(g8, 1, seed=3)
    raw = snapshot_bytes(f, 0.5)
    magic, version, n1, n2, n3, rank, t = struct.unpack_from("<4sIIIIId", raw)
    assert (magic, version, n1, n2, n3, rank, t) == (b"VTRS", 1, 8, 8, 8, 1, 0.5)
    body = np.frombuffer(raw, "<f8", offset=struct.calcsize("<4sIIIIId"))
    assert body.size == 3 * 8**3
    # first component block, y1 varying fastest
    assert body[1] == f.phys[0, 1, 0, 0]
    assert body[8] == f.phys[0, 0, 1, 0]
    assert body[8**3] == f.phys[1, 0, 0, 0]


def test_snapshot_rejects_garbage(tmp_path, g8):
    p = tmp_path / "bad.vtrs"
    p.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(ValueError):
        read_snapshot(p)
    raw = snapshot_bytes(random_field(g8, 0, seed=1))
    p.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_snapshot(p)


def test_incompressible_checkpoint(tmp_path, g8):
    eta = make_volume_preserving_eta(g8, "shear", 0.05)
    st = FlowState.initial(eta, Field.zeros(g8, 1), FlowParams(1.0, 2.0, 3.0))
    cfg = SchemeConfig(dt=0.05)
    st = step(step(st, cfg), cfg)
    paths = write_checkpoint(tmp_path, st, cfg)
    assert all(p.exists() for p in paths)
    back = read_checkpoint(tmp_path / "state.json")
    assert back.params == st.params and back.step_count == 2 and back.t == pytest.approx(st.t)
    for name in ("eta", "u", "q"):
        assert np.allclose(getattr(back, name).phys, getattr(st, name).phys, atol=1e-15)


def test_compressible_checkpoint(tmp_path, g8):
    p = CompressibleParams(1.5, 1.0, 2.0, 3.0, PressureLaw(2.0, 1.4))
    st = CompressibleState.initial(random_field(g8, 1, seed=1, amplitude=0.01), Field.zeros(g8, 1), p)
    write_checkpoint(tmp_path, st, prefix="c")
    back = read_checkpoint(tmp_path / "c.json")
    assert back.params == p
    assert np.allclose(back.eta.phys, st.eta.phys, atol=1e-15)
