"""Closed-form modal solutions of the linearised systems and the Stokes correctors.

Every Fourier coefficient of a linear solution obeys

    rho eta'' + mu s eta' + kappa s eta = 0,     s = |k|^2,

whose solution is written with m = -mu s / (2 rho), d^2 = m^2 - kappa s / rho:

    eta = e^{mt} [eta0 C + (u0 - m eta0) S]
    u   = e^{mt} [u0 C + (m (u0 - m eta0) + d^2 eta0) S]

with C = cosh(d t), S = sinh(d t)/d for d^2 > 0, their trigonometric
counterparts for d^2 < 0, and C = 1, S = t on the repeated root.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .compressible import CompressibleParams, longitudinal_projector
from .errors import NotDivergenceFree
from .incompressible import FlowParams
from .kinematics import DeformationPack, build_pack
from .spectral import Field

REPEATED_TOL = 1e-9


def _disc(rho, mu, kappa, s):
    m = -mu * s / (2.0 * rho)
    d2 = m * m - kappa * s / rho
    scale = m * m + kappa * s / rho
    return m, d2, scale


def mode_roots(rho, mu, kappa, ksq):
    """Characteristic roots of rho z^2 + mu s z + kappa s = 0 (complex pair)."""
    m, d2, _ = _disc(rho, mu, kappa, np.asarray(ksq, dtype=float))
    d = np.sqrt(np.asarray(d2, dtype=complex))
    return m + d, m - d


def _cs(d2, scale, t):
    """C and S factors, vectorised over modes."""
    d2 = np.asarray(d2, dtype=float)
    rep = np.abs(d2) <= REPEATED_TOL * np.where(scale > 0, scale, 1.0)
    pos = (d2 > 0) & ~rep
    neg = (d2 < 0) & ~rep
    C = np.ones_like(d2)
    S = np.full_like(d2, float(t))
    d = np.sqrt(np.abs(d2))
    safe = np.where(rep, 1.0, d)
    C = np.where(pos, np.cosh(d * t), C)
    S = np.where(pos, np.sinh(d * t) / safe, S)
    C = np.where(neg, np.cos(d * t), C)
    S = np.where(neg, np.sin(d * t) / safe, S)
    return C, S


def propagate(eta_h, u_h, rho, mu, kappa, ksq, t):
    """Exact solution of the per-mode damped oscillator after time t."""
    m, d2, scale = _disc(rho, mu, kappa, ksq)
    C, S = _cs(d2, scale, t)
    e = np.exp(m * t)
    b = u_h - m * eta_h
    eta = e * (eta_h * C + b * S)
    u = e * (u_h * C + (m * b + d2 * eta_h) * S)
    return eta, u


@dataclass(frozen=True)
class ModeSolution:
    """eta(t) = c1 e^{s1 t} + c2 e^{s2 t}, or (c1 + c2 t) e^{s1 t} on a repeated root."""

    k: tuple
    roots: tuple
    amplitudes: tuple
    repeated: bool
    polarization: Optional[np.ndarray] = None

    def eta(self, t):
        s1, s2 = self.roots
        c1, c2 = self.amplitudes
        if self.repeated:
            return (c1 + c2 * t) * np.exp(s1 * t)
        return c1 * np.exp(s1 * t) + c2 * np.exp(s2 * t)

    def u(self, t):
        s1, s2 = self.roots
        c1, c2 = self.amplitudes
        if self.repeated:
            return (c2 + s1 * (c1 + c2 * t)) * np.exp(s1 * t)
        return c1 * s1 * np.exp(s1 * t) + c2 * s2 * np.exp(s2 * t)

    @property
    def decay_rate(self):
        return float(-max(np.real(self.roots)))


def mode_solution(k, rho, mu, kappa, eta0=1.0, u0=0.0, polarization=None) -> ModeSolution:
    k = tuple(int(v) for v in k)
    s = float(sum(v * v for v in k))
    m, d2, scale = _disc(rho, mu, kappa, s)
    rep = abs(d2) <= REPEATED_TOL * (scale if scale > 0 else 1.0)
    if rep:
        return ModeSolution(k, (complex(m), complex(m)), (eta0, u0 - m * eta0), True, polarization)
    s1, s2 = mode_roots(rho, mu, kappa, s)
    s1, s2 = complex(s1), complex(s2)
    c2 = (s1 * eta0 - u0) / (s1 - s2)
    return ModeSolution(k, (s1, s2), (eta0 - c2, c2), False, polarization)


def compressible_modes(k, params: CompressibleParams, eta0=1.0, u0=0.0):
    """Longitudinal and transverse ModeSolutions of one wavevector."""
    kv = np.asarray(k, dtype=float)
    n = kv / np.linalg.norm(kv)
    lon = mode_solution(k, params.rho_bar, params.mu + params.lambda_,
                        params.kappa + params.sound, eta0, u0, n)
    tra = mode_solution(k, params.rho_bar, params.mu, params.kappa, eta0, u0)
    return {"longitudinal": lon, "transverse": tra}


# ------------------------------------------------------------------ solvers
def _require_solenoidal(f: Field, name, tol):
    g = f.grid
    r = np.sqrt(g.norm_sq(g.div(f.hat)))
    scale = max(1.0, np.sqrt(g.norm_sq(g.grad(f.hat))))
    if r > tol * scale:
        raise NotDivergenceFree(f"||div {name}||_0 = {r:.3e}; apply the correctors first")


def solve_linear_incompressible(eta0: Field, u0: Field, t: float,
                                params: FlowParams = FlowParams(), tol=1e-10):
    """(eta1, u1) at time t for divergence-free data (pressure identically zero)."""
    _require_solenoidal(eta0, "eta0", tol)
    _require_solenoidal(u0, "u0", tol)
    g = eta0.grid
    eta, u = propagate(eta0.hat, u0.hat, params.rho, params.mu, params.kappa, g.ksq, t)
    return Field(g, eta, True), Field(g, u, True)


def solve_linear_compressible(eta0: Field, u0: Field, t: float, params: CompressibleParams):
    g = eta0.grid
    p_l = longitudinal_projector(g)
    eh, uh = eta0.hat, u0.hat
    et, ut = propagate(eh, uh, params.rho_bar, params.mu, params.kappa, g.ksq, t)
    el, ul = propagate(eh, uh, params.rho_bar, params.mu + params.lambda_,
                       params.kappa + params.sound, g.ksq, t)
    return Field(g, et + p_l(el - et), True), Field(g, ut + p_l(ul - ut), True)


# --------------------------------------------------------------- correctors
class Corrector(NamedTuple):
    field: Field
    norm: float          # ||eta_r||_3 or ||u_r||_2
    reference: float     # ||grad eta0||_2^2 or ||grad eta0||_2 ||u0||_2
    leftover_div: float  # ||div(data + corrector)||_0

    @property
    def ratio(self):
        return self.norm / self.reference if self.reference > 0 else 0.0


def stokes_corrector_eta(eta0: Field) -> Corrector:
    """eta_r = -grad inv_lap div eta0 (minus the longitudinal part of eta0)."""
    g = eta0.grid
    eh = eta0.hat
    er = -longitudinal_projector(g)(eh)
    er[..., 0, 0, 0] = 0.0
    left = np.sqrt(g.norm_sq(g.div(eh + er)))
    return Corrector(Field(g, er, True), np.sqrt(g.norm_sq(er, 3)),
                     g.norm_sq(g.grad(eh), 2), left)


def stokes_corrector_u(pack0: DeformationPack, u0: Field) -> Corrector:
    """u_r = grad inv_lap (div_{Atilde0} u0)."""
    pack0.require_valid()
    g = pack0.grid
    uh = u0.hat
    src = pack0.tilde_div_hat(uh)
    ur = g.grad(g.inv_lap(src))
    left = np.sqrt(g.norm_sq(g.div(uh + ur)))
    ref = np.sqrt(g.norm_sq(pack0.grad_eta_hat, 2)) * np.sqrt(g.norm_sq(uh, 2))
    return Corrector(Field(g, ur, True), np.sqrt(g.norm_sq(ur, 2)), ref, left)


def build_adjusted_initial_data(eta0: Field, u0: Field, pack0: Optional[DeformationPack] = None):
    """(eta0 + eta_r, u0 + u_r) together with both corrector reports."""
    pack0 = pack0 or build_pack(eta0, unit_jacobian=True)
    ce = stokes_corrector_eta(eta0)
    cu = stokes_corrector_u(pack0, u0)
    g = eta0.grid
    return (Field(g, eta0.hat + ce.field.hat, True), Field(g, u0.hat + cu.field.hat, True),
            ce, cu)
