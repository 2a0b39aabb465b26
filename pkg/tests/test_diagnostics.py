import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from viscolag.compressible import CompressibleParams, CompressibleState
from viscolag.diagnostics import (DiagnosticsRecord, deviation_norms, drift_residual,
                                  energy_functionals, fit_decay_rate, i0h, loglog_slope,
                                  make_record, read_csv, straightening, summarize, write_csv,
                                  write_json)
from viscolag.errors import NonPositiveSamples, WindowTooSmall
from viscolag.incompressible import FlowParams, FlowState
from viscolag.kinematics import make_volume_preserving_eta
from viscolag.linear import solve_linear_incompressible
from viscolag.spectral import Field, Grid, leray_project, random_field, sobolev_norm

PI = np.pi


def sin_y2_e1(g):
    return Field.from_function(g, lambda a, b, c: [np.sin(b), 0.0, 0.0])


# ----------------------------------------------------------------------- i0h
def test_i0h_examples(g8):
    z = Field.zeros(g8, 1)
    assert i0h(z, z, 5.0) == 0.0
    assert i0h(sin_y2_e1(g8), z, 3.0) == pytest.approx(12 * PI**3, rel=1e-13)
    alpha, kappa = 0.2, 7.0
    eta = make_volume_preserving_eta(g8, "shear", alpha)
    assert i0h(z, eta, kappa) == pytest.approx(kappa * alpha**2 * 12 * PI**3, rel=1e-12)


def test_i0h_consistent_with_sobolev_norm(g8):
    u = random_field(g8, 1, seed=1)
    eta = random_field(g8, 1, seed=2, kmax=2)
    grad = Field(g8, g8.grad(eta.hat), True)
    want = sobolev_norm(u, 2) ** 2 + 2.5 * sobolev_norm(grad, 2) ** 2
    assert i0h(u, eta, 2.5) == pytest.approx(want, rel=1e-12)


# -------------------------------------------------------------- straightening
def test_straightening_examples(g8):
    flat = Field.from_function(g8, lambda a, b, c: [np.sin(a + b), np.cos(b), 0.3])
    assert straightening(flat) == (0.0, 0.0)
    bent = Field.from_function(g8, lambda a, b, c: [0.0, 0.0, np.sin(c)])
    l2, sup = straightening(bent)
    assert l2 == pytest.approx(2 * PI**1.5, rel=1e-13)
    assert sup == pytest.approx(1.0, abs=1e-12)
    assert straightening(Field.from_function(g8, lambda a, b, c: [1.0, 2.0, 3.0])) == (0.0, 0.0)


@given(st.integers(0, 10_000))
def test_straightening_ignores_plane_functions(seed):
    g = Grid(8)
    eta = random_field(g, 1, seed=seed)
    plane = random_field(g, 1, seed=seed + 1).phys[..., :1]
    shifted = Field(g, eta.phys + plane)
    a, b = straightening(eta), straightening(shifted)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-14)


# ---------------------------------------------------------------------- drift
def test_drift_examples(g8):
    c = np.array([0.1, -0.2, 0.3])
    const = Field(g8, np.broadcast_to(c[:, None, None, None], (3,) + g8.shape).copy())
    assert drift_residual(const, np.zeros(3), c, 4.0) == pytest.approx(0.0, abs=1e-14)
    u_avg = np.array([0.5, 0.0, -1.0])
    moving = Field(g8, np.broadcast_to((u_avg * 2.0 + c)[:, None, None, None],
                                       (3,) + g8.shape).copy())
    assert drift_residual(moving, u_avg, c, 2.0) == pytest.approx(0.0, abs=1e-13)


def test_drift_of_linear_solution_decays_at_slowest_rate(g8):
    e0 = leray_project(Field.from_function(g8, lambda a, b, c: [0.0, 0.0, np.sin(a)]))
    e0 = e0.to_spectral()
    u0 = Field.zeros(g8, 1).to_spectral()
    p = FlowParams(1.0, 4.0, 1.0)          # overdamped, slowest root -2 + sqrt(3)
    ts = np.linspace(4, 12, 21)
    vals = [drift_residual(solve_linear_incompressible(e0, u0, t, p)[0], np.zeros(3),
                           np.zeros(3), t) for t in ts]
    assert fit_decay_rate(ts, vals, (4, 12)).rate == pytest.approx(2 - np.sqrt(3), rel=1e-3)


# ---------------------------------------------------------------------- fits
def test_fit_exact_exponentials():
    t = np.linspace(0, 4, 41)
    f = fit_decay_rate(t, np.exp(-0.5 * t))
    assert f.rate == pytest.approx(0.5) and f.r2 == pytest.approx(1.0)
    assert (f.t_a, f.t_b) == (2.0, 4.0)
    g = fit_decay_rate(t, 3 * np.exp(-2 * t), (0, 4))
    assert g.rate == pytest.approx(2.0) and g.intercept == pytest.approx(np.log(3))
    assert g.samples == 41


def test_fit_two_exponential_mixture():
    t = np.linspace(0, 2, 41)
    f = fit_decay_rate(t, np.exp(-t) + 0.01 * np.exp(-0.1 * t), (0, 2))
    assert 0.9 <= f.rate <= 1.0


@given(st.floats(1e-3, 1e3), st.floats(0.01, 3.0))
def test_fit_is_scale_invariant(scale, rate):
    t = np.linspace(0, 5, 30)
    v = np.exp(-rate * t) * (1 + 0.1 * np.sin(3 * t))
    a = fit_decay_rate(t, v, (0, 5))
    b = fit_decay_rate(t, scale * v, (0, 5))
    assert b.rate == pytest.approx(a.rate, rel=1e-9, abs=1e-12)
    assert b.intercept - a.intercept == pytest.approx(np.log(scale), abs=1e-9)
    assert 0.0 <= a.r2 <= 1.0


def test_fit_errors():
    t = np.linspace(0, 1, 20)
    with pytest.raises(WindowTooSmall):
        fit_decay_rate(t, np.ones(20), (0.0, 0.2))
    with pytest.raises(WindowTooSmall):
        fit_decay_rate(t, np.ones(20), (0.5, 0.5))
    v = np.ones(20)
    v[-1] = 0.0
    with pytest.raises(NonPositiveSamples):
        fit_decay_rate(t, v)


def test_loglog_slope():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert loglog_slope(x, 3 / x) == pytest.approx(-1.0)


# ---------------------------------------------------------------- functionals
def _flow_state(g, eta, u, **kw):
    return FlowState.initial(eta, u, FlowParams(**kw))


def test_functionals_rest_and_shear(g8):
    z = Field.zeros(g8, 1)
    assert energy_functionals(_flow_state(g8, z, z)) == (0.0, 0.0, 0.0, 0.0)
    alpha, kappa = 0.1, 3.0
    e = energy_functionals(_flow_state(g8, make_volume_preserving_eta(g8, "shear", alpha), z,
                                       kappa=kappa))
    assert e.E == pytest.approx(kappa * alpha**2 * 2 * PI**3, rel=1e-12)
    assert e.D == 0.0


@given(st.floats(0.1, 3.0))
def test_functionals_are_quadratic(sigma):
    g = Grid(8)
    eta = random_field(g, 1, seed=1, amplitude=0.01, kmax=2)
    u = random_field(g, 1, seed=2, amplitude=0.01)
    a = energy_functionals(_flow_state(g, eta, u))
    b = energy_functionals(_flow_state(g, sigma * eta, sigma * u))
    for name in ("E", "E1", "E2"):
        assert getattr(b, name) == pytest.approx(sigma**2 * getattr(a, name), rel=1e-12)


def test_cross_term_multiplicity(g8):
    """sum_{|a|=2} int d^a eta . d^a u for eta = u/2, u = sin(y1) sin(y2) e1."""
    f = Field.from_function(g8, lambda a, b, c: [np.sin(a) * np.sin(b), 0.0, 0.0])
    eta = 0.5 * f
    z = Field.zeros(g8, 1)
    e = energy_functionals(_flow_state(g8, eta, f), c4=0.0, c5=0.0)
    base = 2 * PI**3                         # ||sin y1 sin y2||_0^2
    d3 = 0.25 * 8 * base                     # |k|^6 = 8
    cross = 0.5 * 3 * base                   # alpha in {(2,0,0), (0,2,0), (1,1,0)}
    assert e.E1 == pytest.approx(cross + 0.5 * d3, rel=1e-12)
    only_eta = energy_functionals(_flow_state(g8, eta, z), c4=1.0, c5=0.0)
    assert only_eta.E1 == pytest.approx(d3 + 0.5 * d3, rel=1e-12)


def test_compressible_functionals_available(g8):
    st_ = CompressibleState.initial(random_field(g8, 1, seed=1, amplitude=0.01, kmax=2),
                                    random_field(g8, 1, seed=2, amplitude=0.01),
                                    CompressibleParams())
    e = energy_functionals(st_)
    assert e.E > 0 and e.D > 0 and np.isnan(e.E1) and np.isfinite(e.E2)


# ----------------------------------------------------------------- deviation
def test_deviation_examples(g8):
    u = random_field(g8, 1, seed=1)
    eta = random_field(g8, 1, seed=2)
    s = _flow_state(g8, eta, u)
    assert deviation_norms(s, (eta.to_spectral(), u.to_spectral()), 2.0) == (0.0, 0.0, 0.0)
    z = Field.zeros(g8, 1)
    a = deviation_norms(_flow_state(g8, z, sin_y2_e1(g8)), (z, z), 1.0)
    assert a[0] == pytest.approx(12 * PI**3) and a[1] == 0.0 and a[2] == pytest.approx(a[0])


def test_deviation_kappa_and_symmetry(g8):
    s1 = _flow_state(g8, random_field(g8, 1, seed=1), random_field(g8, 1, seed=2))
    s2 = _flow_state(g8, random_field(g8, 1, seed=3), random_field(g8, 1, seed=4))
    a = deviation_norms(s1, s2, 1.0)
    b = deviation_norms(s1, s2, 2.0)
    assert b[0] == a[0] and b[1] == pytest.approx(2 * a[1])
    assert deviation_norms(s2, s1, 1.0) == pytest.approx(a, rel=1e-14)


# ------------------------------------------------------------------- records
def test_records_roundtrip(tmp_path, g8):
    eta = make_volume_preserving_eta(g8, "shear", 0.1)
    st_ = _flow_state(g8, eta, random_field(g8, 1, seed=1, amplitude=0.1))
    recs = [make_record(st_, np.zeros(3), np.zeros(3)) for _ in range(3)]
    for i, r in enumerate(recs):
        r.t = float(i)
    path = tmp_path / "diag.csv"
    write_csv(recs, path)
    cols = read_csv(path)
    assert list(cols) == DiagnosticsRecord.columns()
    assert np.array_equal(cols["t"], [0.0, 1.0, 2.0])
    assert cols["u_h2"][0] == recs[0].u_h2
    assert all(cols[c][0] >= 0 for c in ("u_h2", "grad_eta_h2", "etabar_l2", "piola"))
    summary = summarize(recs)
    assert summary["schema"] == 1 and summary["samples"] == 3
    assert summary["E2_monotone"] is True
    write_json(summary, tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text())["final"]["t"] == 2.0
