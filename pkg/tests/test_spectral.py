import numpy as np
import pytest
from hypothesis import given, strategies as st

from viscolag.errors import NonZeroMean
from viscolag.spectral import (Field, Grid, dealias, divergence, gradient, inverse_laplacian,
                               laplacian, leray_project, multiply, random_field, sobolev_norm)

PI = np.pi
seeds = st.integers(min_value=0, max_value=10_000)


@pytest.mark.parametrize("n", [7, 6, (8, 8)])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        Grid(n)


def test_grid_rejects_unknown_dealias():
    with pytest.raises(ValueError):
        Grid(8, "pad5x")


@pytest.mark.parametrize("mode,fine", [("pad3/2", 12), ("pad2x", 16), ("two-thirds", 8)])
def test_fine_grid_sizes(mode, fine):
    assert Grid(8, mode).fine == (fine,) * 3


def test_roundtrip_physical_spectral(g8):
    f = random_field(g8, 1, seed=3)
    back = Field(g8, f.hat, True).phys
    assert np.allclose(back, f.phys, atol=1e-14)


def test_gradient_of_sine(g8):
    f = Field.from_function(g8, lambda y1, y2, y3: np.sin(y2))
    grad = gradient(f).phys
    assert np.allclose(grad[0], 0, atol=1e-14)
    assert np.allclose(grad[1], np.cos(g8.coords()[1]), atol=1e-14)
    assert np.allclose(grad[2], 0, atol=1e-14)


def test_divergence_and_laplacian(g8):
    y1, y2, y3 = g8.coords()
    v = Field.from_function(g8, lambda a, b, c: [np.sin(a), np.cos(2 * b), 0.0])
    assert np.allclose(divergence(v).phys, np.cos(y1) - 2 * np.sin(2 * y2), atol=1e-13)
    f = Field.from_function(g8, lambda a, b, c: np.sin(a) * np.sin(2 * b))
    assert np.allclose(laplacian(f).phys, -5 * f.phys, atol=1e-13)


def test_gradient_axis_convention(g8):
    v = Field.from_function(g8, lambda a, b, c: [np.sin(b), 0.0, 0.0])
    grad = gradient(v).phys
    assert grad.shape == (3, 3) + g8.shape
    # grad[i, k] = d_k v_i
    assert np.allclose(grad[0, 1], np.cos(g8.coords()[1]), atol=1e-14)
    assert np.abs(grad[1:]).max() < 1e-14


def test_sobolev_norms_of_sine(g8):
    f = Field.from_function(g8, lambda a, b, c: np.sin(b))
    assert sobolev_norm(f, 0) == pytest.approx(2 * PI**1.5, rel=1e-13)
    assert sobolev_norm(f, 1) == pytest.approx(np.sqrt(8 * PI**3), rel=1e-13)
    assert sobolev_norm(f, 2) == pytest.approx(np.sqrt(12 * PI**3), rel=1e-13)
    assert sobolev_norm(f, 3) == pytest.approx(np.sqrt(16 * PI**3), rel=1e-13)


def test_sobolev_rejects_order():
    with pytest.raises(ValueError):
        sobolev_norm(Field.zeros(Grid(8)), 4)


def test_mixed_multi_index_weight(g8):
    # sin(y1) sin(y2): every |alpha| <= 2 multi-index counted once
    f = Field.from_function(g8, lambda a, b, c: np.sin(a) * np.sin(b))
    base = 2 * PI**3
    # weights: 1 + (1 + 1) + (1 + 1 + 1)  [a=(2,0,0),(0,2,0),(1,1,0)]
    assert sobolev_norm(f, 2) ** 2 == pytest.approx(6 * base, rel=1e-13)


@given(seeds)
def test_plancherel_matches_quadrature(seed):
    g = Grid(8)
    f = random_field(g, 0, seed=seed)
    quad = np.sum(f.phys**2) * g.cell_volume
    assert g.norm_sq(f.hat) == pytest.approx(quad, rel=1e-12)


def test_inverse_laplacian_roundtrip(g8):
    f = random_field(g8, 0, seed=5)
    phi = inverse_laplacian(f)
    assert np.allclose(laplacian(phi).phys, f.phys, atol=1e-13)
    assert abs(g8.mean(phi.hat)) < 1e-15


def test_inverse_laplacian_rejects_mean(g8):
    f = random_field(g8, 0, seed=5) + 0.3
    with pytest.raises(NonZeroMean):
        inverse_laplacian(f)


def test_leray_example(g8):
    v = Field.from_function(g8, lambda a, b, c: [np.sin(a), np.sin(a), 0.0])
    p = leray_project(v).phys
    assert np.allclose(p[0], 0, atol=1e-15)
    assert np.allclose(p[1], np.sin(g8.coords()[0]), atol=1e-15)


@given(seeds)
def test_leray_is_divergence_free_idempotent_projection(seed):
    g = Grid(8)
    v = random_field(g, 1, seed=seed)
    p = leray_project(v)
    assert np.abs(divergence(p).hat).max() < 1e-14
    assert np.allclose(leray_project(p).hat, p.hat, atol=1e-15)
    # orthogonal: (v - Pv) is perpendicular to Pv
    assert abs(g.inner((v - p).hat, p.hat)) < 1e-12 * g.norm_sq(v.hat)


def test_leray_keeps_mean(g8):
    v = random_field(g8, 1, seed=2) + 0.5
    assert np.allclose(g8.mean(leray_project(v).hat), 0.5)


@pytest.mark.parametrize("mode", ["pad3/2", "pad2x"])
def test_padded_product_is_exact(mode):
    g = Grid(8, mode)
    a = Field.from_function(g, lambda y1, y2, y3: np.sin(3 * y1) * np.cos(2 * y2))
    b = Field.from_function(g, lambda y1, y2, y3: np.sin(3 * y1))
    prod = multiply(a, b)
    # exact product has |k1| = 6 (beyond the base band) and k1 = 0
    want = Field.from_function(g, lambda y1, y2, y3: 0.5 * np.cos(2 * y2))
    assert np.allclose(prod.phys, want.phys, atol=1e-14)


def test_two_thirds_mask():
    g = Grid(12, "two-thirds")
    f = random_field(g, 0, seed=1, decay=0)
    kept = dealias(f.to_spectral(), 2).hat
    k1, k2, k3 = g.wavenumbers
    outside = (np.abs(k1) >= 4) | (np.abs(k2) >= 4) | (k3 >= 4)
    assert np.abs(kept[outside]).max() == 0
    assert np.abs(kept[~outside] - f.hat[~outside]).max() < 1e-15


@pytest.mark.parametrize("mode", ["pad3/2", "pad2x", "two-thirds"])
def test_up_down_roundtrip(mode):
    g = Grid(8, mode)
    f = random_field(g, 1, seed=11)
    fh = np.where(g.band, f.hat, 0)
    assert np.allclose(g.down(g.up(fh)), fh, atol=1e-15)


def _mirror_gap(g, fh):
    i1 = (-np.arange(g.n[0])) % g.n[0]
    i2 = (-np.arange(g.n[1])) % g.n[1]
    plane = fh[..., 0]
    return np.abs(plane - np.conj(plane[..., i1[:, None], i2[None, :]])).max()


@given(st.integers(0, 10_000))
def test_forward_transforms_are_exactly_hermitian(seed):
    g = Grid((8, 10, 12))
    x = np.random.default_rng(seed).standard_normal((3,) + g.shape)
    assert _mirror_gap(g, g.fft(x)) == 0.0
    assert _mirror_gap(g, g.down(np.random.default_rng(seed).standard_normal((3,) + g.fine))) == 0.0


def test_hermitian_drops_only_the_invisible_part(g8):
    f = random_field(g8, 1, seed=3).hat
    ghost = np.zeros_like(f)
    ghost[0, 1, 2, 0] = 1j
    ghost[0, -1, -2, 0] = 1j                # anti-Hermitian pair
    assert np.abs(g8.ifft(ghost)).max() < 1e-15
    assert np.allclose(g8.hermitian(f + ghost), f, atol=1e-15)


def test_up_matches_padded_inverse(g8):
    f = random_field(g8, 1, seed=4).hat
    ref = g8.ifft(g8.pad(f, g8.fine), n=g8.fine)
    assert np.allclose(g8.up(f), ref, atol=1e-15)


def test_random_field_properties(g8):
    a = random_field(g8, 1, seed=9, amplitude=0.3)
    b = random_field(g8, 1, seed=9, amplitude=0.3)
    assert np.array_equal(a.phys, b.phys)
    assert np.allclose(g8.mean(a.hat), 0)
    rms = np.sqrt(g8.norm_sq(a.hat) / (2 * PI) ** 3)
    assert rms == pytest.approx(0.3)
    assert not np.array_equal(a.phys, random_field(g8, 1, seed=10, amplitude=0.3).phys)


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_gradient_is_linear(seed, a, b):
    g = Grid(8)
    f = random_field(g, 0, seed=seed)
    h = random_field(g, 0, seed=seed + 1)
    lhs = gradient(a * f + b * h).phys
    rhs = a * gradient(f).phys + b * gradient(h).phys
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_field_rejects_shape(g8):
    with pytest.raises(ValueError):
        Field(g8, np.zeros((2,) + g8.shape))
    with pytest.raises(ValueError):
        Field(g8, np.zeros((9, 9, 9)))


def test_field_product_requires_multiply(g8):
    f = Field.zeros(g8)
    with pytest.raises(TypeError):
        f * f


def test_grid_pickles(g8):
    import pickle

    g = pickle.loads(pickle.dumps(g8))
    assert g == g8 and g.fine == g8.fine
