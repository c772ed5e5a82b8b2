"""Fourier-Chebyshev calculus and mode-by-mode elliptic solves."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .grid import Domain, ScalarField, VectorField

__all__ = [
    "Dirichlet",
    "Neumann",
    "EllipticProblem",
    "IncompatibleNeumannError",
    "to_spectral",
    "to_physical",
    "ddx",
    "ddz",
    "laplacian",
    "gradient",
    "dealias",
    "dealias_cutoff",
    "product",
    "solve_elliptic",
    "velocity_from_streamfunction",
    "vorticity",
    "vorticity_wall_values",
]


class IncompatibleNeumannError(ValueError):
    """Pure-Neumann Poisson data violating the mean (solvability) constraint."""


def to_spectral(values: np.ndarray) -> np.ndarray:
    """Horizontal rfft of ``(nx, nz)`` values; mode 0 is the horizontal mean."""
    return np.fft.rfft(values, axis=0, norm="forward")


def to_physical(coeffs: np.ndarray, nx: int) -> np.ndarray:
    return np.fft.irfft(coeffs, n=nx, axis=0, norm="forward")


def _ik(domain: Domain) -> np.ndarray:
    ik = 1j * domain.wavenumbers
    ik[-1] = 0.0  # Nyquist mode has no real derivative
    return ik


def ddx(f: ScalarField) -> ScalarField:
    d = f.domain
    fh = to_spectral(f.values)
    return ScalarField(d, to_physical(_ik(d)[:, None] * fh, d.nx))


def ddz(f: ScalarField) -> ScalarField:
    return ScalarField(f.domain, f.values @ f.domain.dz_matrix.T)


def gradient(f: ScalarField) -> tuple[ScalarField, ScalarField]:
    return ddx(f), ddz(f)


def laplacian(f: ScalarField) -> ScalarField:
    d = f.domain
    fh = to_spectral(f.values)
    xx = to_physical(-(d.wavenumbers**2)[:, None] * fh, d.nx)
    return ScalarField(d, xx + f.values @ d.dz2_matrix.T)


def dealias_cutoff(domain: Domain) -> int:
    """Number of retained rfft modes under the 2/3 rule (k < nx/3)."""
    return int(np.ceil(domain.nx / 3))


def dealias(f: ScalarField) -> ScalarField:
    d = f.domain
    fh = to_spectral(f.values)
    fh[dealias_cutoff(d):] = 0.0
    return ScalarField(d, to_physical(fh, d.nx))


def product(f: ScalarField, g: ScalarField) -> ScalarField:
    """Pointwise product with 2/3-rule truncation of both factors and result."""
    return dealias(dealias(f) * dealias(g))


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed wall value; ``value`` is a scalar or a length-nx profile."""

    value: object = 0.0
    kind = "dirichlet"


@dataclass(frozen=True)
class Neumann:
    """Prescribed ``d/dx2`` at the wall (same orientation on both walls)."""

    value: object = 0.0
    kind = "neumann"


@dataclass(frozen=True)
class EllipticProblem:
    """``(Laplacian - helmholtz_shift) g = rhs`` with wall conditions."""

    helmholtz_shift: float = 0.0
    bc_bottom: object = field(default_factory=Dirichlet)
    bc_top: object = field(default_factory=Dirichlet)

    def __post_init__(self):
        if not self.helmholtz_shift >= 0:
            raise ValueError("helmholtz_shift must be nonnegative")
        for bc in (self.bc_bottom, self.bc_top):
            if not isinstance(bc, (Dirichlet, Neumann)):
                raise TypeError(f"boundary condition must be Dirichlet or Neumann, got {bc!r}")

    @property
    def singular(self) -> bool:
        return (
            self.helmholtz_shift == 0
            and self.bc_bottom.kind == "neumann"
            and self.bc_top.kind == "neumann"
        )


@lru_cache(maxsize=2048)
def _mode_factor(domain: Domain, k: float, shift: float, kinds: tuple[str, str], bordered: bool):
    n = domain.nz
    a = domain.dz2_matrix - (k**2 + shift) * np.eye(n)
    for row, kind in zip((0, n - 1), kinds):
        a[row] = np.eye(n)[row] if kind == "dirichlet" else domain.dz_matrix[row]
    if bordered:
        # unknown constant source absorbs the discrete solvability defect,
        # last row pins the vertical mean to zero
        c = np.ones(n)
        c[0] = c[-1] = 0.0
        a = np.block([[a, c[:, None]], [domain.quad_weights[None, :], np.zeros((1, 1))]])
    return sla.lu_factor(a)


def _bc_coeffs(bc, domain: Domain) -> np.ndarray:
    v = np.broadcast_to(np.asarray(bc.value, dtype=float), (domain.nx,))
    return np.fft.rfft(v, norm="forward")


def _solve_modes(domain, shift, kinds, rhs_h, bot_h, top_h, nmodes=None):
    """Mode-by-mode collocation solve. Returns (coeffs, k=0 defect or 0)."""
    n = domain.nz
    kw = domain.wavenumbers
    nmodes = len(kw) if nmodes is None else nmodes
    out = np.zeros((len(kw), n), dtype=complex)
    defect = 0.0
    singular = shift == 0 and kinds == ("neumann", "neumann")
    for m in range(nmodes):
        b = rhs_h[m].copy()
        b[0], b[-1] = bot_h[m], top_h[m]
        if m == 0 and singular:
            lu = _mode_factor(domain, 0.0, 0.0, kinds, True)
            sol = sla.lu_solve(lu, np.append(b.real, 0.0))
            out[m] = sol[:-1]
            defect = float(sol[-1])
        else:
            lu = _mode_factor(domain, float(kw[m]), float(shift), kinds, False)
            out[m] = sla.lu_solve(lu, b.real) + 1j * sla.lu_solve(lu, b.imag)
    return out, defect


def neumann_mean_defect(rhs: ScalarField, bottom_flux, top_flux) -> tuple[float, float]:
    """Solvability defect ``integral(rhs) - (flux_top - flux_bottom)`` and its scale."""
    from .grid import integrate

    d = rhs.domain
    bot = float(np.mean(np.broadcast_to(np.asarray(bottom_flux, float), (d.nx,))))
    top = float(np.mean(np.broadcast_to(np.asarray(top_flux, float), (d.nx,))))
    total = integrate(rhs)
    defect = total - d.gamma * (top - bot)
    scale = abs(total) + d.gamma * (abs(top) + abs(bot)) + np.abs(rhs.values).max(initial=0.0)
    return defect, scale


def solve_elliptic(problem: EllipticProblem, rhs: ScalarField) -> ScalarField:
    """Solve ``(Laplacian - shift) g = rhs`` with the problem's wall conditions.

    Pure-Neumann Poisson problems must satisfy the mean constraint
    ``integral(rhs) = integral(g_top') - integral(g_bottom')`` to 1e-10
    (relative); the returned solution then has zero mean.
    """
    d = rhs.domain
    if not np.all(np.isfinite(rhs.values)):
        raise ValueError("right-hand side contains non-finite values")
    kinds = (problem.bc_bottom.kind, problem.bc_top.kind)
    if problem.singular:
        defect, scale = neumann_mean_defect(rhs, problem.bc_bottom.value, problem.bc_top.value)
        if abs(defect) > 1e-10 * max(scale, 1.0):
            raise IncompatibleNeumannError(
                "pure-Neumann problem violates the mean constraint "
                f"integral(rhs) = integral(top flux) - integral(bottom flux): defect {defect:.3e}"
            )
    coeffs, _ = _solve_modes(
        d,
        float(problem.helmholtz_shift),
        kinds,
        to_spectral(rhs.values),
        _bc_coeffs(problem.bc_bottom, d),
        _bc_coeffs(problem.bc_top, d),
    )
    return ScalarField(d, to_physical(coeffs, d.nx))


def velocity_from_streamfunction(psi: ScalarField) -> VectorField:
    """``u = (-d2 psi, d1 psi)``."""
    return VectorField(-ddz(psi), ddx(psi))


def vorticity(u: VectorField) -> ScalarField:
    return ddx(u.u2) - ddz(u.u1)


def vorticity_wall_values(u1_bottom, u1_top, ls: float):
    """Navier-slip closure: ``omega = -u1/ls`` at x2 = 0 and ``+u1/ls`` at x2 = 1."""
    if not ls > 0:
        raise ValueError(f"slip length must be positive (or inf), got {ls}")
    u1_bottom = np.asarray(u1_bottom, dtype=float)
    u1_top = np.asarray(u1_top, dtype=float)
    if np.isinf(ls):
        return np.zeros_like(u1_bottom), np.zeros_like(u1_top)
    return -u1_bottom / ls, u1_top / ls
