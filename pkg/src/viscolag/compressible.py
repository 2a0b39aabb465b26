"""IMEX time stepping for the compressible Lagrangian viscoelastic system.

    eta_t = u
    rho_bar u_t + J(grad_A P(rho_bar / J) - mu Delta_A u - lam grad_A div_A u) = kappa Delta eta

The density is never stored: it is rho_bar / J.  The linearisation about rest
is advanced implicitly per mode after a Helmholtz split (transverse part with
(mu, kappa), longitudinal part with (mu + lam, kappa + P'(rho_bar) rho_bar));
the remainder N2 is extrapolated explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ConfigError, OutOfRange
from .incompressible import SchemeConfig, choose_dt, modal_update
from .kinematics import DeformationPack, build_pack
from .spectral import VOLUME, Field, Grid

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class PressureLaw:
    """gamma-law P(tau) = a tau^gamma."""

    a: float = 1.0
    gamma: float = 2.0
    kind: str = "gamma-law"

    def __post_init__(self):
        if self.kind != "gamma-law":
            raise ConfigError(f"unsupported pressure law {self.kind!r}")
        if not self.a > 0 or not self.gamma >= 1:
            raise ConfigError("gamma-law needs a > 0 and gamma >= 1")

    def __call__(self, tau):
        return self.a * np.power(tau, self.gamma)

    def d1(self, tau):
        return self.a * self.gamma * np.power(tau, self.gamma - 1.0)

    def d2(self, tau):
        return self.a * self.gamma * (self.gamma - 1.0) * np.power(tau, self.gamma - 2.0)

    def validate(self, rho_bar, samples=65):
        tau = np.linspace(rho_bar / 4.0, 4.0 * rho_bar, samples)
        if not (np.all(self(tau) > 0) and np.all(self.d1(tau) > 0)):
            raise ConfigError("pressure law must be positive and increasing on [rho/4, 4 rho]")

    def remainder(self, delta, rho_bar, method="closed"):
        """int_0^delta (delta - z) P''(rho_bar + z) dz, pointwise in delta.

        ``closed`` uses P(rb + d) - P(rb) - P'(rb) d, ``gauss`` a 12-point
        Gauss-Legendre rule after z = delta s, ``adaptive`` scipy's quad per
        point (slow; meant for auditing).
        """
        delta = np.asarray(delta, dtype=float)
        if method == "closed":
            x = delta / rho_bar
            g = self.gamma
            if g == 1.0:
                return np.zeros_like(delta)
            if g == 2.0:
                return self.a * delta**2
            return self.a * rho_bar**g * (np.expm1(g * np.log1p(x)) - g * x)
        if method == "gauss":
            s = _GL_NODES.reshape((-1,) + (1,) * delta.ndim)
            w = _GL_WEIGHTS.reshape(s.shape)
            return delta**2 * np.sum(w * (1.0 - s) * self.d2(rho_bar + delta * s), axis=0)
        if method == "adaptive":
            out = np.empty_like(delta)
            for idx, d in np.ndenumerate(delta):
                val, _ = integrate.quad(lambda z: (d - z) * self.d2(rho_bar + z), 0.0, d,
                                        epsabs=1e-14, epsrel=1e-13)
                out[idx] = val
            return out
        raise ValueError(f"unknown quadrature method {method!r}")

    def energy_primitive(self, tau, rho_bar):
        """int_{rho_bar/4}^{tau} P(z) / z^2 dz."""
        lo = rho_bar / 4.0
        g = self.gamma
        if g == 1.0:
            return self.a * np.log(tau / lo)
        return self.a * (np.power(tau, g - 1.0) - lo ** (g - 1.0)) / (g - 1.0)


@dataclass(frozen=True)
class CompressibleParams:
    rho_bar: float = 1.0
    mu: float = 1.0
    lambda_: float = 1.0
    kappa: float = 1.0
    pressure: PressureLaw = field(default_factory=PressureLaw)

    def __post_init__(self):
        for name in ("rho_bar", "mu", "kappa"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.lambda_ < self.mu / 3.0 - 1e-14:
            raise ConfigError("lambda must be at least mu/3")
        self.pressure.validate(self.rho_bar)

    @property
    def zeta_bulk(self):
        return self.lambda_ - self.mu / 3.0

    @property
    def sound(self):
        """P'(rho_bar) rho_bar."""
        return float(self.pressure.d1(self.rho_bar) * self.rho_bar)


@dataclass
class _History:
    pack: DeformationPack
    n_prev: Optional[np.ndarray] = None
    dt_prev: Optional[float] = None


@dataclass
class CompressibleState:
    eta: Field
    u: Field
    t: float = 0.0
    params: CompressibleParams = field(default_factory=CompressibleParams)
    step_count: int = 0
    _hist: Optional[_History] = field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.eta.grid

    @classmethod
    def initial(cls, eta0: Field, u0: Field, params: CompressibleParams, t=0.0):
        return cls(eta0.to_spectral(), u0.to_spectral(), t, params)


def _pack_for(eta, j_floor=0.1):
    pack = build_pack(eta, unit_jacobian=False, j_floor=j_floor)
    pack.require_valid()
    return pack


def state_pack(state) -> DeformationPack:
    return state._hist.pack if state._hist is not None else _pack_for(state.eta)


def _density_fine(pack, params):
    rho = params.rho_bar / pack.jac_fine
    lo, hi = params.rho_bar / 4.0, 4.0 * params.rho_bar
    if rho.min() < lo or rho.max() > hi:
        raise OutOfRange(f"density range [{rho.min():.3g}, {rho.max():.3g}] leaves "
                         f"[{lo:.3g}, {hi:.3g}]")
    return rho


def density_field(state, pack: Optional[DeformationPack] = None) -> Field:
    """rho_bar / J, dealiased onto the base grid."""
    pack = pack or state_pack(state)
    return Field(state.grid, pack.grid.down(_density_fine(pack, state.params), degree=3), True)


def _times(g, a_hat, b_hat):
    """Dealiased product of a scalar and a (vector) field, both by coefficients."""
    return g.down(g.up(a_hat) * g.up(b_hat))


def _n2_hat(pack, u_hat, params, method="closed"):
    g = pack.grid
    mu, lam, rb = params.mu, params.lambda_, params.rho_bar
    law = params.pressure
    rho = _density_fine(pack, params)

    lap_a = pack.lap_hat(u_hat)
    diva = pack.div_hat(u_hat)
    graddiv_a = pack.grad_hat(diva)
    visc = mu * (lap_a - g.lap(u_hat))                                  # mu(div_At grad_A u + div grad_At u)
    bulk = lam * (graddiv_a - g.grad(g.div(u_hat)))                     # lam(grad_At div_A u + grad div_At u)

    jm1 = g.down(pack.jac_fine - 1.0, degree=3)
    weighted = _times(g, jm1, mu * lap_a + lam * graddiv_a)             # (J-1)(mu Delta_A u + lam grad_A div_A u)

    p_hat = g.down(law(rho), degree=3)
    grad_a_p = pack.grad_hat(p_hat)
    press = -_times(g, jm1, grad_a_p) - (grad_a_p - g.grad(p_hat))      # -(J-1) grad_A P - grad_At P

    jinv_m1 = 1.0 / pack.jac_fine - 1.0
    div_eta = g.up(g.div(pack.eta_hat))
    delta = rb * jinv_m1
    inner = params.sound * (jinv_m1 + div_eta) + law.remainder(delta, rb, method)
    lin = -g.grad(g.down(inner, degree=3))

    # off-band modes have no implicit damping (ksq = 0 there) but grad div still reaches them
    out = np.where(g.band, visc + bulk + weighted + press + lin, 0.0)
    out[..., 0, 0, 0] = 0.0         # box integral of the momentum forcing vanishes
    return out


def n2_term(state, pack: Optional[DeformationPack] = None, method="closed") -> Field:
    pack = pack or state_pack(state)
    return Field(state.grid, _n2_hat(pack, state.u.hat, state.params, method), True)


def full_force(state, pack: Optional[DeformationPack] = None) -> Field:
    """J(mu Delta_A u + lam grad_A div_A u - grad_A P) minus its linearisation.

    Algebraically equal to N2; used to audit the term-by-term assembly.
    """
    pack = pack or state_pack(state)
    g, p = state.grid, state.params
    u = state.u.hat
    rho = _density_fine(pack, p)
    p_hat = g.down(p.pressure(rho), degree=3)
    lap_a = pack.lap_hat(u)
    graddiv_a = pack.grad_hat(pack.div_hat(u))
    inside = p.mu * lap_a + p.lambda_ * graddiv_a - pack.grad_hat(p_hat)
    jac = g.down(pack.jac_fine, degree=3)
    total = _times(g, jac, inside)
    lin = p.mu * g.lap(u) + p.lambda_ * g.grad(g.div(u)) + p.sound * g.grad(g.div(pack.eta_hat))
    out = total - lin
    out[..., 0, 0, 0] = 0.0
    return Field(g, out, True)


def longitudinal_projector(grid):
    """Per-mode k k^T / |k|^2 applied to vector coefficients."""
    k = grid.kd
    ksq = grid.ksq
    safe = np.where(ksq > 0, ksq, 1.0)

    def apply(v):
        kv = (k[0] * v[0] + k[1] * v[1] + k[2] * v[2]) / safe
        return np.stack([k[0] * kv, k[1] * kv, k[2] * kv])

    return apply


def helmholtz_update(grid, eta_h, u_h, f_h, params, dt, order):
    """Per-mode implicit solve of the linearised compressible operator."""
    ksq = grid.ksq
    rb = params.rho_bar
    p_l = longitudinal_projector(grid)
    eta_t, u_t = modal_update(eta_h, u_h, f_h, rb, params.mu, params.kappa, ksq, dt, order)
    eta_l, u_l = modal_update(eta_h, u_h, f_h, rb, params.mu + params.lambda_,
                              params.kappa + params.sound, ksq, dt, order)
    return eta_t + p_l(eta_l - eta_t), u_t + p_l(u_l - u_t)


def _advance(state, config, dt, order, hist):
    g = state.grid
    n2 = _n2_hat(hist.pack, state.u.hat, state.params)
    if order == 2 and hist.n_prev is not None:
        r = dt / (2.0 * hist.dt_prev)
        force = (1.0 + r) * n2 - r * hist.n_prev
    else:
        force = n2
    eta, u = helmholtz_update(g, state.eta.hat, state.u.hat, force, state.params, dt, order)
    eta, u = (g.hermitian(np.where(g.band, a, 0.0)) for a in (eta, u))
    eta_f = Field(g, eta, True)
    pack = _pack_for(eta_f, config.j_floor)
    return replace(state, eta=eta_f, u=Field(g, u, True), t=state.t + dt,
                   step_count=state.step_count + 1, _hist=_History(pack, n2, dt))


def step_compressible(state: CompressibleState, config: SchemeConfig,
                      dt: Optional[float] = None) -> CompressibleState:
    dt = choose_dt(state, config) if dt is None else dt
    hist = state._hist or _History(_pack_for(state.eta, config.j_floor))
    if config.order == 1:
        return _advance(state, config, dt, 1, hist)
    if hist.n_prev is None:
        half = _advance(state, config, 0.5 * dt, 1, hist)
        out = _advance(half, config, 0.5 * dt, 1, half._hist)
        return replace(out, step_count=state.step_count + 1)
    return _advance(state, config, dt, 2, hist)


# ----------------------------------------------------------------- energies
def pressure_energy(state, pack: Optional[DeformationPack] = None) -> float:
    """rho_bar * int int_{rho_bar/4}^{rho_bar/J} P(z)/z^2 dz dy (product-grid quadrature)."""
    pack = pack or state_pack(state)
    p = state.params
    rho = _density_fine(pack, p)
    return float(p.rho_bar * np.mean(p.pressure.energy_primitive(rho, p.rho_bar)) * VOLUME)


def energy_offset(params: CompressibleParams) -> float:
    """Value of the pressure part at rest (state independent)."""
    return float(params.rho_bar * VOLUME * params.pressure.energy_primitive(params.rho_bar,
                                                                             params.rho_bar))


def compressible_energy(state, pack: Optional[DeformationPack] = None) -> float:
    """rho_bar ||u||^2 + rho_bar int int P(z)/z^2 + kappa ||grad eta||^2."""
    g, p = state.grid, state.params
    return (p.rho_bar * g.norm_sq(state.u.hat) + pressure_energy(state, pack)
            + p.kappa * g.norm_sq(g.grad(state.eta.hat)))


def compressible_dissipation(state, pack: Optional[DeformationPack] = None) -> float:
    """mu ||grad_A u||^2 + lam ||div_A u||^2."""
    pack = pack or state_pack(state)
    g, p = state.grid, state.params
    return (p.mu * g.norm_sq(pack.grad_hat(state.u.hat))
            + p.lambda_ * g.norm_sq(pack.div_hat(state.u.hat)))


def kinematic_residual(prev, new, dt) -> float:
    """||(J_{n+1} - J_n)/dt - (J div_A u)_{n+1/2}||_0 on the product grid.

    J div_A u is evaluated pointwise as cof : grad u, which is exact at the
    product-grid nodes (no truncation of 1/J).
    """
    g = prev.grid
    out = []
    for st in (prev, new):
        pk = state_pack(st)
        grad_u = g.up(g.grad(st.u.hat))
        out.append((pk.jac_fine, np.einsum("lkxyz,lkxyz->xyz", pk.cof_fine, grad_u)))
    r = (out[1][0] - out[0][0]) / dt - 0.5 * (out[0][1] + out[1][1])
    return float(np.sqrt(np.mean(r**2) * VOLUME))
