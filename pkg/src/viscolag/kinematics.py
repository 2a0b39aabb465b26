"""Flow-map geometry: deformation gradient, cofactors, Jacobian, A-operators.

The matrix ``A`` satisfies ``A^T = (grad zeta)^{-1}`` and is built from the nine
explicit 2x2 minors of ``grad zeta`` divided by ``J``; no pointwise numerical
inversion is performed.  For volume-preserving maps the division is skipped
(``unit_jacobian=True``): ``A`` is then the cofactor matrix itself, whose rows
are exactly divergence free after dealiased truncation.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import SingularMap
from .spectral import VOLUME, Field, Grid

J_FLOOR = 0.1
_EYE = np.eye(3)


def cofactor(F):
    """Cofactor matrix of a pointwise 3x3 field ``F[i, j]`` (shape (3, 3, ...))."""
    C = np.empty_like(F)
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            C[i, j] = F[i1, j1] * F[i2, j2] - F[i1, j2] * F[i2, j1]
    return C


def det3(F, cof=None):
    cof = cofactor(F) if cof is None else cof
    return F[0, 0] * cof[0, 0] + F[0, 1] * cof[0, 1] + F[0, 2] * cof[0, 2]


def _identity_hat(grid):
    eye = np.zeros((3, 3) + grid.spectral_shape, dtype=complex)
    for i in range(3):
        eye[i, i, 0, 0, 0] = 1.0
    return eye


def _eta_hat(eta):
    return eta.hat if isinstance(eta, Field) else eta


def _quad_norm(values, cell_volume):
    return float(np.sqrt(np.sum(values**2) * cell_volume))


class DeformationPack:
    """Derived geometry of one displacement field.

    ``amat_hat`` holds dealiased coefficients of A on the base grid and
    ``amat_fine`` their samples on the product grid, which is where every
    contraction ``A_jk d_k f`` is formed.  ``jac_fine`` is the pointwise
    determinant on the product grid (used for validity checks and the density).
    """

    def __init__(self, grid, eta_hat, *, unit_jacobian=False, j_floor=J_FLOOR):
        self.grid = grid
        self.eta_hat = eta_hat
        self.unit_jacobian = unit_jacobian
        self.j_floor = j_floor

        grad_eta = grid.grad(eta_hat)
        self.grad_eta_hat = grad_eta
        F = grid.up(grad_eta) + _EYE.reshape(3, 3, 1, 1, 1)
        cof = cofactor(F)
        jac = det3(F, cof)
        self.min_jac = float(jac.min())
        self.max_jac = float(jac.max())
        if self.min_jac <= 0.0:
            raise SingularMap(self.min_jac, 0.0)
        self.valid = self.min_jac > j_floor
        self.grad_zeta_fine = F
        self.cof_fine = cof
        self.jac_fine = jac
        amat = cof if unit_jacobian else cof / jac
        self.amat_hat = grid.down(amat)
        self.amat_fine = grid.up(self.amat_hat)

    # ------------------------------------------------------------ public fields
    @cached_property
    def eta(self):
        return Field(self.grid, self.eta_hat, True)

    @cached_property
    def grad_zeta(self):
        return Field(self.grid, self.grad_eta_hat + _identity_hat(self.grid), True)

    @cached_property
    def jac(self):
        return Field(self.grid, self.grid.down(self.jac_fine, degree=3), True)

    @cached_property
    def amat(self):
        return Field(self.grid, self.amat_hat, True)

    @cached_property
    def atilde(self):
        return Field(self.grid, self.amat_hat - _identity_hat(self.grid), True)

    @property
    def jac_window_ok(self):
        """Soft check of the analytical window 1/2 <= J <= 3/2."""
        return 0.5 <= self.min_jac and self.max_jac <= 1.5

    def require_valid(self):
        if not self.valid:
            raise SingularMap(self.min_jac, self.j_floor)

    # ------------------------------------------------- coefficient-level kernels
    def _contract_grad(self, D_hat, amat_fine=None):
        """(..., k) derivative coefficients -> (..., j) coefficients of A_jk D_k."""
        A = self.amat_fine if amat_fine is None else amat_fine
        Df = self.grid.up(D_hat)
        out = A[:, 0] * Df[..., 0:1, :, :, :]
        out = out + A[:, 1] * Df[..., 1:2, :, :, :]
        out = out + A[:, 2] * Df[..., 2:3, :, :, :]
        return self.grid.down(out)

    def grad_hat(self, f_hat, amat_fine=None):
        """Coefficients of grad_A f; f may carry leading component axes."""
        return self._contract_grad(self.grid.grad(f_hat), amat_fine)

    def div_hat(self, X_hat, amat_fine=None):
        """Coefficients of div_A X = A_lk d_k X_l over X's last component axis."""
        A = self.amat_fine if amat_fine is None else amat_fine
        if self.unit_jacobian and amat_fine is None:
            # rows of the truncated cofactor matrix are exactly solenoidal, so
            # A_lk d_k X_l = d_k (A_lk X_l): fewer transforms, same coefficients
            Xf = self.grid.up(X_hat)
            flux = [sum(A[l, k] * Xf[..., l, :, :, :] for l in range(3)) for k in range(3)]
            return self.grid.div(self.grid.down(np.stack(flux, axis=-4)))
        Df = self.grid.up(self.grid.grad(X_hat))
        out = 0.0
        for l in range(3):
            for k in range(3):
                out = out + A[l, k] * Df[..., l, k, :, :, :]
        return self.grid.down(out)

    def lap_hat(self, f_hat):
        return self.div_hat(self.grad_hat(f_hat))

    def tilde_grad_hat(self, f_hat):
        """grad_{A - I} f."""
        return self.grad_hat(f_hat) - self.grid.grad(f_hat)

    def tilde_div_hat(self, X_hat):
        return self.div_hat(X_hat) - self.grid.div(X_hat)


def build_pack(eta, *, unit_jacobian=False, j_floor=J_FLOOR, grid=None) -> DeformationPack:
    """Deformation pack for a displacement Field (or coefficients plus ``grid``)."""
    grid = eta.grid if isinstance(eta, Field) else grid
    return DeformationPack(grid, _eta_hat(eta), unit_jacobian=unit_jacobian, j_floor=j_floor)


def _wrap_like(f, pack, data_hat):
    if isinstance(f, Field) and not f.spectral:
        return Field(pack.grid, pack.grid.ifft(data_hat))
    return Field(pack.grid, data_hat, True)


def a_gradient(pack: DeformationPack, f: Field) -> Field:
    pack.require_valid()
    return _wrap_like(f, pack, pack.grad_hat(f.hat))


def a_divergence(pack: DeformationPack, X: Field) -> Field:
    pack.require_valid()
    return _wrap_like(X, pack, pack.div_hat(X.hat))


def a_laplacian(pack: DeformationPack, f: Field) -> Field:
    return a_divergence(pack, a_gradient(pack, f))


# ------------------------------------------------------------- identity audits
def _fine_grid(grid, factor=2):
    return Grid(tuple(factor * v for v in grid.n), "pad2x")


def piola_residual(pack: DeformationPack) -> float:
    """max_i ||d_k(J A_ik)||_0 / ||J A||_0 on the 2x-padded grid."""
    g = pack.grid
    fine = _fine_grid(g)
    F = g.up(pack.grad_eta_hat, m=fine.n) + _EYE.reshape(3, 3, 1, 1, 1)
    cof = cofactor(F)
    jac = det3(F, cof)
    # J * (cof / J) in the general case; round-off only differs from cof
    ja = cof if pack.unit_jacobian else jac * (cof / jac)
    ja_hat = fine.fft(ja)
    rows = fine.div(ja_hat)
    scale = np.sqrt(fine.norm_sq(ja_hat))
    return max(np.sqrt(fine.norm_sq(rows[i])) for i in range(3)) / scale


def _grad_eta_2x(eta, grid):
    g = eta.grid if isinstance(eta, Field) else grid
    fine = _fine_grid(g)
    return fine, g.up(g.grad(_eta_hat(eta)), m=fine.n)


def r_eta(M):
    """((div eta)^2 - tr((grad eta)^2))/2 + det(grad eta), pointwise."""
    tr = M[0, 0] + M[1, 1] + M[2, 2]
    tr_sq = sum(M[i, j] * M[j, i] for i in range(3) for j in range(3))
    return 0.5 * (tr**2 - tr_sq) + det3(M)


def det_expansion_residual(eta, grid=None) -> float:
    """||det(grad eta + I) - 1 - div eta - r_eta||_0, evaluated on the 2x grid."""
    fine, M = _grad_eta_2x(eta, grid)
    jac = det3(M + _EYE.reshape(3, 3, 1, 1, 1))
    div = M[0, 0] + M[1, 1] + M[2, 2]
    return _quad_norm(jac - 1.0 - div - r_eta(M), fine.cell_volume)


def jinv_expansion_residual(eta, grid=None):
    """(||1/J - 1 + div eta||_0, ||grad eta||_2^2): quadratic smallness audit."""
    g = eta.grid if isinstance(eta, Field) else grid
    eh = _eta_hat(eta)
    fine, M = _grad_eta_2x(eta, grid)
    jac = det3(M + _EYE.reshape(3, 3, 1, 1, 1))
    if jac.min() <= 0:
        raise SingularMap(jac.min())
    div = M[0, 0] + M[1, 1] + M[2, 2]
    first = _quad_norm(1.0 / jac - 1.0 + div, fine.cell_volume)
    return first, g.norm_sq(g.grad(eh), 2)


# ------------------------------------------------------ volume-preserving data
DEFAULT_SHEARS = {
    "shear": [(0, 1, 1, 0.0)],
    "composed-shears": [(0, 1, 1, 0.0), (1, 0, 1, 0.0)],
}


def make_volume_preserving_eta(grid: Grid, kind="zero", amplitude=0.0, modes=None) -> Field:
    """Displacement of a composition of axis-aligned shears.

    Each entry of ``modes`` is ``(axis, depends_on, wavenumber, phase)`` and
    applies ``x[axis] += a * sin(wavenumber * x[depends_on] + phase)`` to the
    running map, starting from the identity; every such shear has unit
    Jacobian, hence so does the composition.  ``amplitude`` is a scalar or one
    value per shear.
    """
    if kind == "zero":
        return Field.zeros(grid, 1)
    if kind not in DEFAULT_SHEARS:
        raise ValueError(f"unknown eta kind {kind!r}")
    modes = DEFAULT_SHEARS[kind] if modes is None else [tuple(m) for m in modes]
    if kind == "shear":
        modes = modes[:1]
    amps = np.broadcast_to(np.asarray(amplitude, dtype=float), (len(modes),))
    y = np.stack(grid.coords())
    x = y.copy()
    for (axis, dep, m, phase), a in zip(modes, amps):
        if axis == dep:
            raise ValueError("a shear must depend on a different coordinate")
        if int(m) != m:
            raise ValueError("shear wavenumbers must be integers")
        x[axis] = x[axis] + a * np.sin(m * x[dep] + phase)
    eta_hat = np.where(grid.band, grid.fft(x - y), 0.0)
    eta = Field(grid, grid.ifft(eta_hat))
    pack = build_pack(eta)
    if not pack.valid:
        raise SingularMap(pack.min_jac, pack.j_floor)
    return eta


__all__ = [
    "DeformationPack", "build_pack", "a_gradient", "a_divergence", "a_laplacian",
    "piola_residual", "det_expansion_residual", "jinv_expansion_residual",
    "make_volume_preserving_eta", "cofactor", "det3", "r_eta", "J_FLOOR", "VOLUME",
]
