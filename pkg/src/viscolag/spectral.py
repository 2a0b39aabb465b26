"""Fourier machinery on the 2π-periodic 3-torus.

Fields are stored either as real samples on the uniform grid (physical) or as
``rfftn`` coefficients normalised with ``norm="forward"`` (spectral), so that
coefficient ``c_k`` is the true Fourier coefficient of ``sum c_k exp(i k.y)``
regardless of grid size.  Zero-padding and truncation are then plain copies.

Leading array axes are component axes: a scalar is ``(n1, n2, n3)``, a vector
``(3, n1, n2, n3)`` and a tensor ``(3, 3, n1, n2, n3)``.  ``gradient`` appends
the derivative index as the *last* component axis, so ``grad(u)[i, k]`` is
``d_k u_i``.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import NonZeroMean

TWO_PI = 2.0 * np.pi
VOLUME = TWO_PI**3
DEALIAS_MODES = ("two-thirds", "pad3/2", "pad2x")
_AXES = (-3, -2, -1)


def _workers():
    env = os.environ.get("VISCO_THREADS")
    return max(1, int(env)) if env else 1


def _fine_size(n, mode):
    if mode == "two-thirds":
        return n
    if mode == "pad3/2":
        m = (3 * n + 1) // 2
        return m + (m % 2)
    return 2 * n


@lru_cache(maxsize=None)
def _multi_index_weight(n, order):
    grid = Grid(n)
    k1, k2, k3 = grid.kd
    w = np.zeros(grid.spectral_shape)
    for a in itertools.product(range(order + 1), repeat=3):
        if sum(a) <= order:
            w = w + k1 ** (2 * a[0]) * k2 ** (2 * a[1]) * k3 ** (2 * a[2])
    return w


def _copy_index(n, m):
    """Indices of the non-Nyquist modes of an ``n`` axis inside an ``m`` axis."""
    h = n // 2
    src = np.concatenate([np.arange(0, h), np.arange(h + 1, n)])
    dst = np.concatenate([np.arange(0, h), np.arange(m - h + 1, m)])
    return src, dst


class Grid:
    """Uniform grid on (0, 2π)³ with its wavenumbers and dealiasing policy."""

    def __init__(self, n=16, dealias="pad3/2"):
        if np.isscalar(n):
            n = (int(n),) * 3
        n = tuple(int(v) for v in n)
        if len(n) != 3 or any(v < 8 or v % 2 for v in n):
            raise ValueError(f"grid sizes must be even and >= 8, got {n}")
        if dealias not in DEALIAS_MODES:
            raise ValueError(f"dealias must be one of {DEALIAS_MODES}, got {dealias!r}")
        self.n = n
        self.dealias = dealias
        self.fine = tuple(_fine_size(v, dealias) for v in n)

    def __repr__(self):
        return f"Grid(n={self.n}, dealias={self.dealias!r})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.n, self.dealias) == (other.n, other.dealias)

    def __hash__(self):
        return hash((self.n, self.dealias))

    def __getstate__(self):
        return {"n": self.n, "dealias": self.dealias}

    def __setstate__(self, state):
        self.__init__(state["n"], state["dealias"])

    # ---------------------------------------------------------------- geometry
    @property
    def shape(self):
        return self.n

    @property
    def spectral_shape(self):
        return (self.n[0], self.n[1], self.n[2] // 2 + 1)

    @property
    def cell_volume(self):
        return VOLUME / (self.n[0] * self.n[1] * self.n[2])

    def coords(self, n=None):
        n = self.n if n is None else n
        axes = [TWO_PI * np.arange(v) / v for v in n]
        return np.meshgrid(*axes, indexing="ij")

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers per axis, broadcastable against spectral arrays."""
        n1, n2, n3 = self.n
        k1 = np.fft.fftfreq(n1, 1.0 / n1).reshape(-1, 1, 1)
        k2 = np.fft.fftfreq(n2, 1.0 / n2).reshape(1, -1, 1)
        k3 = np.arange(n3 // 2 + 1, dtype=float).reshape(1, 1, -1)
        return k1, k2, k3

    @cached_property
    def nyquist(self):
        k1, k2, k3 = self.wavenumbers
        return (np.abs(k1) == self.n[0] // 2) | (np.abs(k2) == self.n[1] // 2) | (
            k3 == self.n[2] // 2
        )

    @cached_property
    def kd(self):
        """Wavenumbers used for differentiation (Nyquist entries zeroed)."""
        out = []
        for k, n in zip(self.wavenumbers, self.n):
            k = k.copy()
            k[np.abs(k) == n // 2] = 0.0
            out.append(k)
        return out

    @cached_property
    def ksq(self):
        k1, k2, k3 = self.kd
        return np.where(self.nyquist, 0.0, k1**2 + k2**2 + k3**2)

    @cached_property
    def band(self):
        """Mask of modes carried by state fields under this grid's dealiasing policy."""
        if self.dealias == "two-thirds":
            return self.band_mask(2)
        return ~self.nyquist

    def band_mask(self, degree):
        """Modes safe for a product of the given polynomial degree on the base grid."""
        keep = np.ones(self.spectral_shape, dtype=bool)
        for k, n in zip(self.wavenumbers, self.n):
            keep &= np.abs(k) < n / (degree + 1)
        return keep

    @cached_property
    def plancherel_weight(self):
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        if self.n[2] % 2 == 0:
            w[..., -1] = 1.0
        return w

    def multi_index_weight(self, order):
        """sum over multi-indices |a| <= order of prod_i k_i^(2 a_i)."""
        return _multi_index_weight(self.n, int(order))

    # -------------------------------------------------------------- transforms
    def fft(self, f):
        return self.hermitian(sfft.rfftn(f, axes=_AXES, norm="forward", workers=_workers()))

    @cached_property
    def _mirror(self):
        n1, n2, n3 = self.n
        planes = [0] + ([n3 // 2] if n3 % 2 == 0 else [])
        return (-np.arange(n1)) % n1, (-np.arange(n2)) % n2, planes

    def hermitian(self, fh):
        """Make the self-conjugate planes of half-spectrum coefficients exactly
        Hermitian, in place.

        Inverse real transforms ignore the anti-Hermitian part of these
        planes, so round-off there is invisible to every product and would
        otherwise evolve under the linear operators alone.
        """
        i1, i2, planes = self._mirror
        for p in planes:
            c = fh[..., p]
            fh[..., p] = 0.5 * (c + np.conj(c[..., i1[:, None], i2[None, :]]))
        return fh

    def ifft(self, fh, n=None):
        return sfft.irfftn(fh, s=self.n if n is None else n, axes=_AXES, norm="forward",
                           workers=_workers())

    def pad(self, fh, m):
        """Zero-pad base coefficients onto an ``m`` grid (spectral)."""
        m = tuple(m)
        out = np.zeros(fh.shape[:-3] + (m[0], m[1], m[2] // 2 + 1), dtype=complex)
        s0, d0 = _copy_index(self.n[0], m[0])
        s1, d1 = _copy_index(self.n[1], m[1])
        h = self.n[2] // 2
        out[(Ellipsis,) + np.ix_(d0, d1, np.arange(h))] = fh[
            (Ellipsis,) + np.ix_(s0, s1, np.arange(h))
        ]
        return out

    def truncate(self, gh, m):
        """Restrict coefficients on an ``m`` grid to the base grid, Nyquist dropped."""
        out = np.zeros(gh.shape[:-3] + self.spectral_shape, dtype=complex)
        s0, d0 = _copy_index(self.n[0], m[0])
        s1, d1 = _copy_index(self.n[1], m[1])
        h = self.n[2] // 2
        out[(Ellipsis,) + np.ix_(s0, s1, np.arange(h))] = gh[
            (Ellipsis,) + np.ix_(d0, d1, np.arange(h))
        ]
        return out

    def up(self, fh, m=None):
        """Base coefficients -> physical samples on the product grid.

        Pruned separable transform: each axis is zero-padded just before its
        own inverse FFT, so no work is spent on the all-zero padded blocks.
        """
        m = self.fine if m is None else tuple(m)
        if m == self.n:
            return self.ifft(np.where(self.nyquist, 0.0, fh))
        w = _workers()
        n1, n2, n3 = self.n
        h3 = n3 // 2
        lead = fh.shape[:-3]
        s0, d0 = _copy_index(n1, m[0])
        a = np.zeros(lead + (m[0], n2, h3), dtype=complex)
        a[..., d0, :, :] = fh[..., s0, :, :h3]
        a = sfft.ifft(a, axis=-3, norm="forward", overwrite_x=True, workers=w)
        s1, d1 = _copy_index(n2, m[1])
        b = np.zeros(lead + (m[0], m[1], m[2] // 2 + 1), dtype=complex)
        b[..., :, d1, :h3] = a[..., :, s1, :]
        b[..., :h3] = sfft.ifft(b[..., :h3], axis=-2, norm="forward", workers=w)
        return sfft.irfft(b, n=m[2], axis=-1, norm="forward", overwrite_x=True, workers=w)

    def down(self, g, degree=2):
        """Physical samples on the product grid -> dealiased base coefficients."""
        m = g.shape[-3:]
        if m == self.n:
            gh = self.fft(g)
            mask = self.band_mask(degree) if self.dealias == "two-thirds" else ~self.nyquist
            return np.where(mask, gh, 0.0)
        w = _workers()
        n1, n2, n3 = self.n
        h3 = n3 // 2
        c = sfft.rfft(g, axis=-1, norm="forward", workers=w)[..., :h3]
        s1, d1 = _copy_index(n2, m[1])
        c = sfft.fft(c, axis=-2, norm="forward", overwrite_x=True, workers=w)[..., d1, :]
        s0, d0 = _copy_index(n1, m[0])
        c = sfft.fft(c, axis=-3, norm="forward", overwrite_x=True, workers=w)[..., d0, :, :]
        out = np.zeros(g.shape[:-3] + self.spectral_shape, dtype=complex)
        out[..., s0[:, None], s1[None, :], :h3] = c
        return self.hermitian(out)

    def multiply(self, *fields_hat, degree=None):
        """Dealiased pointwise product of scalar fields given by coefficients."""
        prod = self.up(fields_hat[0])
        for fh in fields_hat[1:]:
            prod = prod * self.up(fh)
        return self.down(prod, degree=degree or len(fields_hat))

    # ---------------------------------------------------- differential operators
    def grad(self, fh):
        k1, k2, k3 = self.kd
        return np.stack([1j * k1 * fh, 1j * k2 * fh, 1j * k3 * fh], axis=-4)

    def div(self, vh):
        k1, k2, k3 = self.kd
        return 1j * (k1 * vh[..., 0, :, :, :] + k2 * vh[..., 1, :, :, :] + k3 * vh[..., 2, :, :, :])

    def lap(self, fh):
        return -self.ksq * fh

    def inv_lap(self, fh):
        """Inverse Laplacian on mean-zero coefficients; the k=0 mode is dropped."""
        ksq = self.ksq
        safe = np.where(ksq > 0, ksq, 1.0)
        return np.where(ksq > 0, -fh / safe, 0.0)

    def leray(self, vh):
        ksq = self.ksq
        safe = np.where(ksq > 0, ksq, 1.0)
        d = self.div(vh)
        gradphi = self.grad(np.where(ksq > 0, d / safe, 0.0))
        return vh + gradphi

    # ------------------------------------------------------------------ norms
    def inner(self, ah, bh):
        """L² inner product over the box, summed over components."""
        w = self.plancherel_weight
        return float(VOLUME * np.sum(w * (ah * np.conj(bh)).real))

    def norm_sq(self, fh, order=0):
        w = self.plancherel_weight
        if order:
            w = w * self.multi_index_weight(order)
        return float(VOLUME * np.sum(w * np.abs(fh) ** 2))

    def mean(self, fh):
        """Volume average of each component."""
        return fh[..., 0, 0, 0].real

    def integral(self, fh):
        return VOLUME * self.mean(fh)


# =============================================================================
# Field value type
# =============================================================================

@dataclass(frozen=True, eq=False)
class Field:
    """Periodic grid function; rank is read off the leading component axes."""

    grid: Grid
    data: np.ndarray
    spectral: bool = False

    def __post_init__(self):
        lead = self.data.shape[:-3]
        if lead not in ((), (3,), (3, 3)):
            raise ValueError(f"unsupported component shape {lead}")
        want = self.grid.spectral_shape if self.spectral else self.grid.shape
        if self.data.shape[-3:] != tuple(want):
            raise ValueError(f"data shape {self.data.shape[-3:]} does not match grid {want}")

    @property
    def rank(self):
        return self.data.ndim - 3

    @property
    def hat(self):
        return self.data if self.spectral else self.grid.fft(self.data)

    @property
    def phys(self):
        return self.grid.ifft(self.data) if self.spectral else self.data

    def to_spectral(self):
        return self if self.spectral else Field(self.grid, self.hat, True)

    def to_physical(self):
        return Field(self.grid, self.phys, False) if self.spectral else self

    @classmethod
    def zeros(cls, grid, rank=0):
        return cls(grid, np.zeros((3,) * rank + grid.shape))

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(y1, y2, y3)``; a (nested) list result makes a vector/tensor."""
        y = grid.coords()

        def build(val):
            if isinstance(val, (list, tuple)):
                return np.stack([build(v) for v in val])
            return np.broadcast_to(np.asarray(val, dtype=float), grid.shape).copy()

        return cls(grid, build(func(*y)))

    def _like(self, data):
        return Field(self.grid, data, self.spectral)

    def _coerce(self, other):
        if isinstance(other, Field):
            return other.data if other.spectral == self.spectral else (
                other.hat if self.spectral else other.phys)
        return other

    def __add__(self, other):
        return self._like(self.data + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._like(self.data - self._coerce(other))

    def __neg__(self):
        return self._like(-self.data)

    def __mul__(self, a):
        if isinstance(a, Field):
            raise TypeError("use multiply() for dealiased field products")
        return self._like(self.data * a)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self._like(self.data / a)

    def component(self, *idx):
        return self._like(self.data[idx])


def _wrap(f, data_hat):
    return Field(f.grid, data_hat, True) if f.spectral else Field(f.grid, f.grid.ifft(data_hat))


def gradient(f: Field) -> Field:
    return _wrap(f, f.grid.grad(f.hat))


def divergence(v: Field) -> Field:
    if v.rank < 1:
        raise ValueError("divergence needs a vector or tensor field")
    return _wrap(v, v.grid.div(v.hat))


def laplacian(f: Field) -> Field:
    return _wrap(f, f.grid.lap(f.hat))


def inverse_laplacian(f: Field, rtol=1e-12) -> Field:
    """Solve Δφ = f for mean-zero φ.  Raises NonZeroMean if f has a mean."""
    fh = f.hat
    mean = float(np.max(np.abs(f.grid.mean(fh))))
    if mean > rtol * np.sqrt(f.grid.norm_sq(fh)):
        raise NonZeroMean(f"mean {mean:.3e} is not small relative to the L2 norm")
    return _wrap(f, f.grid.inv_lap(fh))


def leray_project(v: Field) -> Field:
    if v.rank != 1:
        raise ValueError("leray_project needs a vector field")
    return _wrap(v, v.grid.leray(v.hat))


def sobolev_norm(f: Field, k: int = 0) -> float:
    if k not in (0, 1, 2, 3):
        raise ValueError("Sobolev order must be 0..3")
    return float(np.sqrt(f.grid.norm_sq(f.hat, k)))


def dealias(f: Field, degree: int = 2) -> Field:
    """Zero the modes a product of this degree would contaminate.

    On padded grids products are already formed on the enlarged grid by
    ``multiply``; there the retained band is everything below Nyquist.
    """
    if degree not in (2, 3):
        raise ValueError("degree must be 2 or 3")
    g = f.grid
    mask = g.band_mask(degree) if g.dealias == "two-thirds" else ~g.nyquist
    return _wrap(f, np.where(mask, f.hat, 0.0))


def multiply(a: Field, b: Field) -> Field:
    """Dealiased product of two scalar fields."""
    return _wrap(a, a.grid.multiply(a.hat, b.hat))


def random_field(grid: Grid, rank=1, seed=0, kmax=None, decay=4.0, amplitude=1.0):
    """Seeded band-limited noise with coefficient magnitude ~ |k|^(-decay)."""
    rng = np.random.default_rng(seed)
    shape = (3,) * rank + grid.shape
    noise = grid.fft(rng.standard_normal(shape))
    kmag = np.sqrt(grid.ksq)
    damp = np.where(kmag > 0, np.maximum(kmag, 1.0) ** (-decay), 0.0)
    if kmax is not None:
        k1, k2, k3 = grid.wavenumbers
        damp = np.where((np.abs(k1) <= kmax) & (np.abs(k2) <= kmax) & (k3 <= kmax), damp, 0.0)
    fh = np.where(grid.band, noise * damp, 0.0)
    norm = np.sqrt(grid.norm_sq(fh) / VOLUME)
    if norm > 0:
        fh = fh * (amplitude / norm)
    return Field(grid, grid.ifft(fh))
