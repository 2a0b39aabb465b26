"""IMEX time stepping for the incompressible Lagrangian viscoelastic system.

    eta_t = u
    rho u_t - Delta(mu u + kappa eta) + grad q = N1(eta, u, q)
    div_A u = 0

The constant-coefficient operator is advanced per Fourier mode by an exact
2x2 solve (trapezoidal rule for order 2, backward Euler for order 1).  The
nonlinear viscous remainder is extrapolated (AB2) and the pressure is handled
incrementally: the lagged pressure gradient enters the predictor and the
A-weighted projection supplies the increment.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, NoConvergence, NonZeroMean, StepRejected
from .kinematics import DeformationPack, build_pack, make_volume_preserving_eta
from .spectral import Field, Grid


@dataclass(frozen=True)
class FlowParams:
    rho: float = 1.0
    mu: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("rho", "mu", "kappa"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class SchemeConfig:
    dt: float = 0.01              # fixed step, or the ceiling under the CFL policy
    dt_policy: str = "fixed"      # "fixed" | "cfl"
    cfl: float = 0.5
    order: int = 2
    proj_tol: float = 1e-10
    max_picard: int = 50
    vol_tol: float = 1e-6
    j_floor: float = 0.1
    dealias: str = "pad3/2"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.proj_tol > 0:
            raise ConfigError("proj_tol must be positive")
        if self.order not in (1, 2):
            raise ConfigError("order must be 1 or 2")
        if self.dt_policy not in ("fixed", "cfl"):
            raise ConfigError(f"unknown dt policy {self.dt_policy!r}")
        if self.max_picard < 1:
            raise ConfigError("max_picard must be >= 1")


@dataclass
class _History:
    """Data carried between order-2 steps."""

    pack: DeformationPack
    nv_prev: Optional[np.ndarray] = None       # viscous remainder at t_{n-1}
    amat_prev: Optional[np.ndarray] = None     # A at t_{n-1}, product grid
    dt_prev: Optional[float] = None


@dataclass
class FlowState:
    eta: Field
    u: Field
    q: Field
    t: float = 0.0
    params: FlowParams = field(default_factory=FlowParams)
    step_count: int = 0
    iterations: int = 0
    _hist: Optional[_History] = field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.eta.grid

    @classmethod
    def initial(cls, eta0: Field, u0: Field, params: FlowParams, t=0.0):
        g = eta0.grid
        return cls(eta0.to_spectral(), u0.to_spectral(),
                   Field(g, np.zeros(g.spectral_shape, complex), True), t, params)


class PressureSolve(NamedTuple):
    q: Field
    iterations: int
    residual: float


class Projection(NamedTuple):
    u: Field
    q: Field
    iterations: int


# ----------------------------------------------------------------- operators
def _viscous_remainder(pack, u_hat, mu):
    """mu (div_Atilde grad_A u + div grad_Atilde u) = mu (Delta_A u - Delta u)."""
    return mu * (pack.lap_hat(u_hat) - pack.grid.lap(u_hat))


def _pack_for(eta, config: Optional[SchemeConfig] = None):
    j_floor = config.j_floor if config else 0.1
    pack = build_pack(eta, unit_jacobian=True, j_floor=j_floor)
    pack.require_valid()
    return pack


def n1_term(state: FlowState, pack: Optional[DeformationPack] = None) -> Field:
    """Nonlinear remainder mu(div_Atilde grad_A u + div grad_Atilde u) - grad_Atilde q."""
    pack = pack or _pack_for(state.eta)
    out = _viscous_remainder(pack, state.u.hat, state.params.mu) - pack.tilde_grad_hat(state.q.hat)
    return Field(state.grid, out, True)


def _mean_free(g, fh):
    out = fh.copy()
    out[..., 0, 0, 0] = 0.0
    return out


def _pressure_iterate(pack, rhs_hat, tol, max_iter, ref=None):
    """Fixed point for Delta_A q = rhs; the residual is measured against
    ||rhs||, or against ``ref`` when given."""
    g = pack.grid
    mean = abs(rhs_hat[0, 0, 0])
    scale = np.sqrt(g.norm_sq(rhs_hat))
    if mean > 1e-8 * max(scale, 1e-300) and mean > 1e-14:
        raise NonZeroMean(f"pressure right-hand side has mean {mean:.3e}")
    rhs_hat = _mean_free(g, rhs_hat)
    scale = np.sqrt(g.norm_sq(rhs_hat)) if ref is None else ref
    q = np.zeros_like(rhs_hat)
    if scale == 0.0:
        return q, 0, 0.0
    res = np.inf
    lap_a = 0.0
    for it in range(1, max_iter + 1):
        # q <- inv_lap(rhs - (Delta_A - Delta) q)
        q = g.inv_lap(rhs_hat - lap_a + g.lap(q))
        lap_a = pack.lap_hat(q)
        res = np.sqrt(g.norm_sq(_mean_free(g, lap_a - rhs_hat))) / scale
        if res <= tol:
            return q, it, res
    raise NoConvergence(max_iter, res)


def pressure_solve(pack: DeformationPack, rhs_div: Field, tol=1e-10, max_iter=50) -> PressureSolve:
    """Zero-mean solution of Delta_A q = rhs by preconditioned fixed-point iteration."""
    pack.require_valid()
    q, it, res = _pressure_iterate(pack, rhs_div.hat, tol, max_iter)
    return PressureSolve(Field(pack.grid, q, True), it, res)


def _project(pack, u_hat, dt, rho, tol, max_iter):
    g = pack.grid
    rhs = (rho / dt) * pack.div_hat(u_hat)
    # div_A u = (dt/rho)(rhs - Delta_A q): target proj_tol * ||grad u||, with margin
    ref = 0.5 * (rho / dt) * np.sqrt(g.norm_sq(g.grad(u_hat)))
    q, it, _ = _pressure_iterate(pack, rhs, tol, max_iter, ref)
    return u_hat - (dt / rho) * pack.grad_hat(q), q, it


def project_velocity(pack, u_star: Field, dt: float, rho=1.0, tol=1e-10, max_iter=50) -> Projection:
    """u = u* - (dt/rho) grad_A q with Delta_A q = (rho/dt) div_A u*."""
    pack.require_valid()
    u, q, it = _project(pack, u_star.hat, dt, rho, tol, max_iter)
    g = pack.grid
    return Projection(Field(g, u, True), Field(g, q, True), it)


# ------------------------------------------------------------ modal update
def modal_update(eta_h, u_h, f_h, rho, mu, kappa, ksq, dt, order=2):
    """Advance eta_t = u, rho u_t = -mu s u - kappa s eta + f exactly per mode.

    ``mu`` and ``kappa`` may be arrays broadcastable against ``ksq`` (used for
    the longitudinal/transverse split of the compressible system).
    """
    if order == 2:
        b = 0.5 * dt * mu * ksq + 0.25 * dt * dt * kappa * ksq
        u_new = ((rho - b) * u_h - dt * kappa * ksq * eta_h + dt * f_h) / (rho + b)
        eta_new = eta_h + 0.5 * dt * (u_h + u_new)
    else:
        den = rho + dt * mu * ksq + dt * dt * kappa * ksq
        u_new = (rho * u_h - dt * kappa * ksq * eta_h + dt * f_h) / den
        eta_new = eta_h + dt * u_new
    return eta_new, u_new


def choose_dt(state, config: SchemeConfig) -> float:
    if config.dt_policy == "fixed":
        return config.dt
    gmax = float(np.abs(state.grid.ifft(state.grid.grad(state.u.hat))).max())
    return min(config.dt, config.cfl / (gmax + 1.0))


# ------------------------------------------------------------------- stepping
def _substep(state, config, dt, order, hist):
    """One IMEX step of size dt; returns (eta, u, q, pack, nv, iterations)."""
    g = state.grid
    p = state.params
    pack = hist.pack
    nv = _viscous_remainder(pack, state.u.hat, p.mu)
    if order == 2 and hist.nv_prev is not None:
        r = dt / (2.0 * hist.dt_prev)
        nv_ext = (1.0 + r) * nv - r * hist.nv_prev
        amat_h = (1.0 + r) * pack.amat_fine - r * hist.amat_prev
    else:
        nv_ext = nv
        amat_h = pack.amat_fine
    force = nv_ext - pack.grad_hat(state.q.hat, amat_h)
    eta_s, u_s = modal_update(state.eta.hat, state.u.hat, force, p.rho, p.mu, p.kappa,
                              g.ksq, dt, order)
    new_pack = _pack_for(Field(g, eta_s, True), config)
    u_new, phi, it = _project(new_pack, u_s, dt, p.rho, config.proj_tol, config.max_picard)
    q_new = state.q.hat + phi
    return eta_s, u_new, q_new, new_pack, nv, it


def _check_volume(pack, config):
    err = max(abs(pack.max_jac - 1.0), abs(pack.min_jac - 1.0))
    if err > config.vol_tol:
        raise StepRejected(err, config.vol_tol)


def _advance(state, config, dt, order, hist):
    g = state.grid
    eta, u, q, pack, nv, it = _substep(state, config, dt, order, hist)
    # keep the self-conjugate planes clean: their anti-Hermitian part is
    # invisible to the products, so the explicit remainder would see only -Delta
    eta, u, q = (g.hermitian(a) for a in (eta, u, q))
    _check_volume(pack, config)
    new_hist = _History(pack, nv, hist.pack.amat_fine, dt)
    return replace(state, eta=Field(g, eta, True), u=Field(g, u, True), q=Field(g, q, True),
                   t=state.t + dt, step_count=state.step_count + 1, iterations=it,
                   _hist=new_hist)


def step(state: FlowState, config: SchemeConfig, dt: Optional[float] = None) -> FlowState:
    """Advance by one step; the first order-2 step is bootstrapped by two BE half steps."""
    dt = choose_dt(state, config) if dt is None else dt
    hist = state._hist
    if hist is None:
        hist = _History(_pack_for(state.eta, config))
    if config.order == 1:
        return _advance(state, config, dt, 1, hist)
    if hist.nv_prev is None:
        half = _advance(state, config, 0.5 * dt, 1, hist)
        out = _advance(half, config, 0.5 * dt, 1, half._hist)
        return replace(out, step_count=state.step_count + 1,
                       iterations=half.iterations + out.iterations)
    return _advance(state, config, dt, 2, hist)


def current_pack(state: FlowState) -> DeformationPack:
    return state._hist.pack if state._hist is not None else _pack_for(state.eta)


# ------------------------------------------------------------- initial data
def make_initial_data(grid: Grid, eta_kind="zero", u_spec: Optional[Field] = None,
                      amplitude=0.0, modes=None, tol=1e-10, max_iter=50):
    """(eta0, u0) with eta0 volume preserving and div_{A0} u0 = 0."""
    eta0 = make_volume_preserving_eta(grid, eta_kind, amplitude, modes)
    if u_spec is None:
        return eta0, Field.zeros(grid, 1)
    pack = build_pack(eta0, unit_jacobian=True)
    # absolute bound ||div_A u0|| <= tol: tighten by the gradient scale
    grad = np.sqrt(grid.norm_sq(grid.grad(u_spec.hat)))
    u0 = project_velocity(pack, u_spec, 1.0, 1.0, tol / max(1.0, 2.0 * grad), max_iter).u
    return eta0, u0.to_physical() if not u_spec.spectral else u0


def kappa_threshold(i0h: float, c1: float = 1.0, c2: float = 1.0) -> float:
    """Advisory lower bound max{2 sqrt(c1 I), (4 c1 I)^2} / c2 on the elasticity."""
    if i0h < 0:
        raise ValueError("i0h must be nonnegative")
    if c1 < 1 or not 0 < c2 <= 1:
        raise ValueError("need c1 >= 1 and 0 < c2 <= 1")
    return max(2.0 * np.sqrt(c1 * i0h), (4.0 * c1 * i0h) ** 2) / c2


def k_constant(i0h: float, c1: float = 1.0) -> float:
    """K = 2 sqrt(c1 I0h), reported for display."""
    return 2.0 * np.sqrt(c1 * i0h)
