"""Boussinesq time integration in vorticity-streamfunction form.

Prognostic variables are the temperature deviation from conduction
``theta = T - (1 - x2)``, the vorticity ``omega`` (Fourier modes k != 0) and
the horizontally averaged horizontal velocity ``ubar`` (mode k = 0).  The
stream function and velocity are diagnosed every step.

Time stepping is Crank-Nicolson for diffusion and second-order
Adams-Bashforth (variable step, Euler start) for advection and buoyancy.
Horizontal products are dealiased with the 2/3 rule and only the retained
modes are stored.

The Navier-slip wall closure ``omega = -u1/ls`` (bottom), ``omega = u1/ls``
(top) is imposed implicitly through an influence-matrix correction, so the
new vorticity, stream function and velocity satisfy it exactly at the end
of each step.  All interior Helmholtz and Poisson solves share one
eigendecomposition of the Dirichlet second-derivative matrix.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterator

import numpy as np
import scipy.linalg as sla

from .grid import Domain, ScalarField, VectorField
from .operators import (
    Neumann,
    _bc_coeffs,
    _solve_modes,
    dealias_cutoff,
    ddx,
    ddz,
    neumann_mean_defect,
    to_physical,
    to_spectral,
    velocity_from_streamfunction,
)

__all__ = [
    "PhysParams",
    "Nondim",
    "FlowState",
    "InitialCondition",
    "Schedule",
    "Integrator",
    "BlowUpError",
    "CFLWarning",
    "IncompatiblePressureError",
    "nondimensionalize",
    "conduction_state",
    "default_initial_condition",
    "step",
    "run",
    "recover_pressure",
    "state_residuals",
]

INF = math.inf


class BlowUpError(RuntimeError):
    def __init__(self, step_index: int, time: float):
        super().__init__(f"non-finite values after step {step_index} (t = {time:.6g})")
        self.step_index = step_index
        self.time = time


class CFLWarning(UserWarning):
    pass


class IncompatiblePressureError(ValueError):
    pass


@dataclass(frozen=True)
class PhysParams:
    """Rayleigh number, Prandtl number, slip length and aspect ratio.

    ``pr = inf`` selects the stationary (Stokes) momentum balance and
    ``ls = inf`` free-slip walls.  ``ra = 0`` is admitted for pure conduction.
    """

    ra: float
    pr: float = 1.0
    ls: float = INF
    gamma: float = 2.0

    def __post_init__(self):
        for name in ("ra", "pr", "ls", "gamma"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.ra >= 0 and math.isfinite(self.ra)):
            raise ValueError(f"ra must be finite and nonnegative, got {self.ra}")
        if not self.pr > 0:
            raise ValueError(f"pr must be positive (or inf), got {self.pr}")
        if not self.ls > 0:
            raise ValueError(
                f"slip length must be positive (or inf for free slip), got {self.ls}; "
                "no-slip walls are not supported"
            )
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")

    @property
    def free_slip(self) -> bool:
        return math.isinf(self.ls)

    @property
    def inv_ls(self) -> float:
        return 0.0 if self.free_slip else 1.0 / self.ls

    @property
    def inv_pr(self) -> float:
        return 0.0 if math.isinf(self.pr) else 1.0 / self.pr


@dataclass(frozen=True)
class Nondim:
    """Dimensional inputs: gravity, expansion coefficient, temperature gap,
    layer depth, thermal diffusivity and kinematic viscosity."""

    g: float
    alpha: float
    delta_t: float
    h: float
    kappa: float
    nu: float


def nondimensionalize(d: Nondim) -> tuple[float, float]:
    """Return ``(ra, pr) = (g alpha dT h^3 / (kappa nu), nu / kappa)``."""
    for name in ("g", "alpha", "delta_t", "h", "kappa", "nu"):
        v = getattr(d, name)
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v}")
    ra = d.g * d.alpha * d.delta_t * d.h**3 / (d.kappa * d.nu)
    return ra, d.nu / d.kappa


@dataclass(frozen=True, eq=False)
class FlowState:
    temperature: ScalarField
    vorticity: ScalarField
    streamfunction: ScalarField
    time: float = 0.0

    @property
    def domain(self) -> Domain:
        return self.temperature.domain

    @cached_property
    def velocity(self) -> VectorField:
        return velocity_from_streamfunction(self.streamfunction)


def conduction_state(domain: Domain, time: float = 0.0) -> FlowState:
    z = domain.vertical_nodes
    t = ScalarField(domain, np.broadcast_to(1.0 - z, (domain.nx, domain.nz)).copy())
    return FlowState(t, domain.zeros(), domain.zeros(), time)


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """Initial temperature and velocity (via stream function and vorticity).

    ``from_seed`` builds a random smooth perturbation of conduction.
    """

    temperature: ScalarField
    streamfunction: ScalarField | None = None
    vorticity: ScalarField | None = None

    def __post_init__(self):
        t = self.temperature.values
        if t.min() < -1e-12 or t.max() > 1 + 1e-12:
            raise ValueError("initial temperature must satisfy 0 <= T0 <= 1")

    def state(self) -> FlowState:
        d = self.temperature.domain
        psi = self.streamfunction if self.streamfunction is not None else d.zeros()
        if self.vorticity is not None:
            om = self.vorticity
        else:
            u = velocity_from_streamfunction(psi)
            om = ddx(u.u2) - ddz(u.u1)
        return FlowState(self.temperature, om, psi, 0.0)

    @classmethod
    def from_seed(cls, domain: Domain, seed: int, amplitude: float = 0.01, modes: int = 4):
        rng = np.random.default_rng(seed)
        x1, x2 = domain.mesh()
        pert = np.zeros_like(x1)
        for m in range(1, modes + 1):
            a, b = rng.normal(size=2) / m
            pert += (a * np.cos(2 * np.pi * m * x1 / domain.gamma) + b * np.sin(2 * np.pi * m * x1 / domain.gamma)) * np.sin(
                np.pi * rng.integers(1, 3) * x2
            )
        pert *= amplitude / max(np.abs(pert).max(), 1e-300)
        # keep 0 <= T0 <= 1 near the walls
        t = np.clip(1.0 - x2 + pert * np.sin(np.pi * x2), 0.0, 1.0)
        return cls(ScalarField(domain, t))


def default_initial_condition(domain: Domain, amplitude: float = 0.01) -> InitialCondition:
    """``T0 = 1 - x2 + a sin(pi x2) cos(2 pi x1 / gamma)``, ``u0 = 0``."""
    x1, x2 = domain.mesh()
    t = 1.0 - x2 + amplitude * np.sin(np.pi * x2) * np.cos(2 * np.pi * x1 / domain.gamma)
    return InitialCondition(ScalarField(domain, t))


@lru_cache(maxsize=32)
def _eigen(domain: Domain):
    """Eigendecomposition of the interior block of the Dirichlet d2/dz2."""
    d2 = domain.dz2_matrix
    lam, vec = np.linalg.eig(d2[1:-1, 1:-1])
    lam, vec = lam.real, vec.real
    order = np.argsort(lam)
    lam, vec = lam[order], np.ascontiguousarray(vec[:, order])
    return lam, vec, np.linalg.inv(vec)


class Integrator:
    """Owns one evolving flow and advances it with the IMEX CN/AB2 scheme.

    Parameters
    ----------
    state : FlowState
        Starting point; its stream function defines the velocity.
    params : PhysParams
    dt : float, optional
        Fixed step.  Without it, steps follow the CFL policy capped by
        ``dt_max``.
    cfl : float
        Safety factor for the advective limit.
    """

    def __init__(self, state: FlowState, params: PhysParams, dt: float | None = None,
                 cfl: float = 0.2, dt_max: float = 1e-3):
        d = state.domain
        if abs(d.gamma - params.gamma) > 1e-12 * params.gamma:
            raise ValueError("state domain and params disagree on gamma")
        self.domain = d
        self.params = params
        self.cfl = cfl
        self.dt_max = dt_max
        self.fixed_dt = dt
        self.time = float(state.time)
        self.steps = 0
        self.nk = dealias_cutoff(d)
        self.k = d.wavenumbers[: self.nk]
        self.ik = 1j * self.k
        self.lam, self.vec, self.vinv = _eigen(d)
        dmat = d.dz_matrix
        self.wall_rows = np.vstack([dmat[0, 1:-1], dmat[-1, 1:-1]]) @ self.vec
        self.one_minus_z = 1.0 - d.vertical_nodes

        def spec(a):
            return np.ascontiguousarray(np.fft.rfft(a.T, axis=1, norm="forward")[:, : self.nk])

        self.theta = spec(state.temperature.values - self.one_minus_z[None, :])
        self.omega = spec(state.vorticity.values)
        self.psi = spec(state.streamfunction.values)
        self.ubar = -(dmat @ self.psi[:, 0].real)
        if params.inv_pr == 0.0:
            self.ubar[:] = 0.0
        self.omega[:, 0] = -(dmat @ self.ubar)
        self._psi_mean_matrix = self._mean_psi_operator()
        self.psi[:, 0] = self._psi_mean_matrix @ (-self.ubar)
        self._prev = None  # (F_theta, F_omega, F_ubar, dt)
        self._dt_ops = None
        self._warned = False
        if params.inv_pr == 0.0:
            self._setup(1.0)
            self._stokes_update()

    # operator setup -------------------------------------------------
    def _mean_psi_operator(self):
        d = self.domain
        a = d.dz_matrix.copy()
        a[0] = 0.0
        a[0, 0] = 1.0
        inv = np.linalg.inv(a)
        inv[:, 0] = 0.0  # psi(0) = 0
        return inv

    def _setup(self, dt: float):
        """Factorise everything that depends on the step size."""
        if self._dt_ops == dt:
            return
        p = self.params
        d = self.domain
        lam = self.lam[:, None]
        k2 = (self.k**2)[None, :]
        self.theta_den = 1.0 - 0.5 * dt * (lam - k2)
        if p.inv_pr == 0.0:
            alpha, beta = 0.0, 1.0
        else:
            alpha, beta = 1.0, 0.5 * dt * p.pr
        self.omega_alpha, self.omega_beta = alpha, beta
        self.omega_den = alpha - beta * (lam - k2)
        lap_den = lam - k2
        lap_den[:, 0] = 1.0  # k = 0 handled through ubar
        self.psi_den = self.omega_den * lap_den
        # influence functions for unit wall vorticity at bottom (0) and top (1)
        d2 = d.dz2_matrix
        lift = beta * np.stack([d2[1:-1, 0], d2[1:-1, -1]], axis=1)  # (n-2, 2)
        c_om = (self.vinv @ lift)[:, :, None] / self.omega_den[:, None, :]  # (n-2, 2, nk)
        c_psi = c_om / lap_den[:, None, :]
        self.infl_omega = np.einsum("ij,jak->iak", self.vec, c_om)
        self.infl_psi = np.einsum("ij,jak->iak", self.vec, c_psi)
        gw = np.einsum("wj,jak->wak", self.wall_rows, c_psi)  # d psi/dz at walls
        if p.free_slip:
            self.closure = None
        else:
            inv_ls = p.inv_ls
            m = np.empty((self.nk, 2, 2))
            m[:, 0, 0] = 1.0 - inv_ls * gw[0, 0]
            m[:, 0, 1] = -inv_ls * gw[0, 1]
            m[:, 1, 0] = inv_ls * gw[1, 0]
            m[:, 1, 1] = 1.0 + inv_ls * gw[1, 1]
            m[0] = np.eye(2)
            self.closure = np.linalg.inv(m)
        # k = 0 horizontal mean flow with Robin walls
        if p.inv_pr > 0.0:
            a = np.eye(d.nz) - 0.5 * dt * p.pr * d2
            dz = d.dz_matrix
            a[0] = dz[0]
            a[0, 0] -= p.inv_ls
            a[-1] = dz[-1]
            a[-1, -1] += p.inv_ls
            self.ubar_lu = sla.lu_factor(a)
        self._dt_ops = dt

    # physics ---------------------------------------------------------
    def _physical(self, coeffs):
        return np.fft.irfft(coeffs, n=self.domain.nx, axis=-1, norm="forward")

    def _spectral(self, values):
        return np.fft.rfft(values, axis=-1, norm="forward")[..., : self.nk]

    def _rates(self):
        """Explicit tendencies at the current level and the physical velocity."""
        d = self.domain
        dmat = d.dz_matrix
        stack = np.stack([self.psi, self.omega, self.theta], axis=1)  # (nz, 3, nk)
        dz = (dmat @ stack.reshape(d.nz, -1).view(float)).view(complex).reshape(stack.shape)
        ik = self.ik
        fields = np.stack(
            [-dz[:, 0], ik * self.psi, ik * self.omega, dz[:, 1], ik * self.theta, dz[:, 2]]
        )
        u1, u2, om_x, om_z, th_x, th_z = self._physical(fields)
        adv = np.stack([u1 * om_x + u2 * om_z, u1 * th_x + u2 * (th_z - 1.0)])
        f_om, f_th = -self._spectral(adv)
        if self.params.inv_pr > 0.0:
            f_om = f_om + self.params.pr * self.params.ra * ik * self.theta
            f_ub = -(dmat @ np.mean(u1 * u2, axis=-1))
        else:
            f_ub = None
        return f_th, f_om, f_ub, (u1, u2)

    def cfl_dt(self, u1=None, u2=None) -> float:
        d = self.domain
        if u1 is None:
            u1, u2 = self._velocity_physical()
        # pointwise sum of the directional rates: AB2 stability depends on both at once
        rate = (np.abs(u1) / d.dx + np.abs(u2) / d.dz_local[:, None]).max()
        return INF if rate == 0 else self.cfl / rate

    def _velocity_physical(self):
        dz = self.domain.dz_matrix @ self.psi
        return self._physical(np.stack([-dz, self.ik * self.psi]))

    def _laplacian_interior(self, f):
        d2 = self.domain.dz2_matrix[1:-1]
        lap = (d2 @ f.view(float)).view(complex)
        return lap - (self.k**2) * f[1:-1]

    def _solve_omega(self, rhs_int):
        """Interior right-hand side -> (omega, psi) with the wall closure."""
        c = self.vinv @ rhs_int.view(float)
        c = c.view(complex)
        c_om = c / self.omega_den
        c_psi = c / self.psi_den
        om_p = (self.vec @ c_om.view(float)).view(complex)
        ps_p = (self.vec @ c_psi.view(float)).view(complex)
        nz = self.domain.nz
        omega = np.zeros((nz, self.nk), dtype=complex)
        psi = np.zeros((nz, self.nk), dtype=complex)
        omega[1:-1] = om_p
        psi[1:-1] = ps_p
        if self.closure is not None:
            gp = (self.wall_rows @ c_psi.view(float)).view(complex)  # (2, nk)
            inv_ls = self.params.inv_ls
            b = np.stack([inv_ls * gp[0], -inv_ls * gp[1]])  # (2, nk)
            walls = np.einsum("kab,bk->ak", self.closure, b)
            walls[:, 0] = 0.0
            omega[0], omega[-1] = walls
            omega[1:-1] += self.infl_omega[:, 0] * walls[0] + self.infl_omega[:, 1] * walls[1]
            psi[1:-1] += self.infl_psi[:, 0] * walls[0] + self.infl_psi[:, 1] * walls[1]
        return omega, psi

    def _set_mean_flow(self, omega, psi):
        dmat = self.domain.dz_matrix
        omega[:, 0] = -(dmat @ self.ubar)
        psi[:, 0] = self._psi_mean_matrix @ (-self.ubar)

    def _stokes_update(self):
        rhs = self.params.ra * self.ik * self.theta[1:-1]
        omega, psi = self._solve_omega(np.ascontiguousarray(rhs))
        self._set_mean_flow(omega, psi)
        self.omega, self.psi = omega, psi

    def step(self, dt: float | None = None, cap: float | None = None) -> float:
        """Advance by one step and return its size.

        ``dt`` overrides the step (a CFL excess is reported as
        :class:`CFLWarning`); otherwise the fixed or CFL step is used,
        shortened to ``cap`` when given.
        """
        f_th, f_om, f_ub, (u1, u2) = self._rates()
        if dt is None:
            dt = self._choose_dt(u1, u2)
            if cap is not None and cap < dt:
                dt = cap
        if not self._warned:
            lim = self.cfl_dt(u1, u2)
            if dt > lim:
                self._warned = True
                warnings.warn(f"dt = {dt:.3g} exceeds CFL limit {lim:.3g} at t = {self.time:.6g}"
                              " (reported once per integrator)", CFLWarning, stacklevel=2)
        self._setup(dt)
        if self._prev is None:
            g_th, g_om, g_ub = f_th, f_om, f_ub
        else:
            p_th, p_om, p_ub, dt_prev = self._prev
            r = dt / dt_prev
            a, b = 1.0 + 0.5 * r, -0.5 * r
            g_th = a * f_th + b * p_th
            g_om = a * f_om + b * p_om
            g_ub = a * f_ub + b * p_ub if f_ub is not None else None
        self._prev = (f_th, f_om, f_ub, dt)
        p = self.params
        rhs = self.theta[1:-1] + 0.5 * dt * self._laplacian_interior(self.theta) + dt * g_th[1:-1]
        c = (self.vinv @ np.ascontiguousarray(rhs).view(float)).view(complex) / self.theta_den
        theta = np.zeros_like(self.theta)
        theta[1:-1] = (self.vec @ c.view(float)).view(complex)
        self.theta = theta
        if p.inv_pr == 0.0:
            self._stokes_update()
        else:
            rhs = self.omega[1:-1] + self.omega_beta * self._laplacian_interior(self.omega) + dt * g_om[1:-1]
            omega, psi = self._solve_omega(np.ascontiguousarray(rhs))
            d2 = self.domain.dz2_matrix
            rb = self.ubar + 0.5 * dt * p.pr * (d2 @ self.ubar) + dt * g_ub
            rb[0] = rb[-1] = 0.0
            self.ubar = sla.lu_solve(self.ubar_lu, rb, check_finite=False)
            self._set_mean_flow(omega, psi)
            self.omega, self.psi = omega, psi
        self.time += dt
        self.steps += 1
        if not (np.isfinite(self.theta.sum()) and np.isfinite(self.omega.sum())):
            raise BlowUpError(self.steps, self.time)
        return dt

    def _choose_dt(self, u1, u2) -> float:
        if self.fixed_dt is not None:
            return self.fixed_dt
        target = min(self.dt_max, self.cfl_dt(u1, u2))
        cur = self._dt_ops
        if cur is None:
            return target
        if target < cur:
            # headroom so a slowly accelerating flow does not refactor every step
            return 0.85 * target
        if target > 1.25 * cur:
            return min(target, 1.25 * cur)
        return cur

    def advance(self, t_end: float, max_steps: int | None = None) -> None:
        """Step until ``time`` reaches ``t_end`` (the last step is shortened)."""
        n = 0
        eps = 1e-12 * max(1.0, abs(t_end))
        while self.time < t_end - eps:
            remaining = t_end - self.time
            if self.fixed_dt is not None:
                self.step(min(self.fixed_dt, remaining))
            else:
                self.step(cap=remaining)
            n += 1
            if max_steps is not None and n >= max_steps:
                break

    @property
    def state(self) -> FlowState:
        d = self.domain
        t = self._physical(self.theta).T + self.one_minus_z[None, :]
        om = self._physical(self.omega).T
        ps = self._physical(self.psi).T
        return FlowState(ScalarField(d, t), ScalarField(d, om), ScalarField(d, ps), self.time)


def step(state: FlowState, params: PhysParams, dt: float) -> FlowState:
    """One IMEX step from ``state`` (Euler start for the explicit part)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    integ = Integrator(state, params, dt=dt)
    integ.step(dt)
    return integ.state


def state_residuals(state: FlowState, params: PhysParams) -> dict:
    """Discrete monitors of the state invariants."""
    u = state.velocity
    om = state.vorticity
    bottom, top = u.u1.bottom, u.u1.top
    if params.free_slip:
        wb, wt = np.zeros_like(bottom), np.zeros_like(top)
    else:
        wb, wt = -bottom / params.ls, top / params.ls
    scale = max(np.abs(om.values).max(), np.abs(wb).max(), np.abs(wt).max(), 1e-300)
    closure = max(np.abs(om.bottom - wb).max(), np.abs(om.top - wt).max()) / scale
    tv = state.temperature.values
    return {
        "u2_wall": float(max(np.abs(u.u2.bottom).max(), np.abs(u.u2.top).max())),
        "closure_rel": float(closure) if scale > 1e-300 else 0.0,
        "t_min": float(tv.min()),
        "t_max": float(tv.max()),
    }


@dataclass(frozen=True)
class Schedule:
    """Run horizon and sampling.

    ``dt = None`` uses the adaptive CFL policy.  Averages use samples with
    ``t >= spinup_fraction * t_end``.
    """

    t_end: float
    sample_every: float = 0.1
    dt: float | None = None
    dt_max: float = 1e-3
    cfl: float = 0.2
    spinup_fraction: float = 0.5


def run(init, params: PhysParams, schedule: Schedule, deltas=(0.05, 0.1, 0.2),
        pressure: bool = True) -> Iterator[tuple[FlowState, dict]]:
    """Integrate and yield ``(state, record)`` at every sample.

    ``init`` is an :class:`InitialCondition` or a :class:`FlowState`.  The
    first sample is the initial state; with ``t_end = 0`` it is the only one.
    """
    from .diagnostics import sample_record

    state = init.state() if isinstance(init, InitialCondition) else init
    integ = Integrator(state, params, dt=schedule.dt, cfl=schedule.cfl, dt_max=schedule.dt_max)
    s = integ.state
    yield s, sample_record(s, params, deltas=deltas, pressure=pressure)
    t0 = integ.time
    if schedule.t_end <= t0:
        return
    next_sample = t0 + schedule.sample_every
    while integ.time < schedule.t_end - 1e-12:
        integ.step()
        if integ.time >= next_sample - 1e-12 or integ.time >= schedule.t_end - 1e-12:
            s = integ.state
            yield s, sample_record(s, params, deltas=deltas, pressure=pressure)
            while next_sample <= integ.time + 1e-12:
                next_sample += schedule.sample_every


def pressure_rhs(state: FlowState, params: PhysParams):
    """Source and wall fluxes of the pressure Poisson problem."""
    u = state.velocity
    a11, a12 = ddx(u.u1), ddz(u.u1)
    a21, a22 = ddx(u.u2), ddz(u.u2)
    grad_dot = a11 * a11 + 2.0 * a12 * a21 + a22 * a22
    rhs = -params.inv_pr * grad_dot + params.ra * ddz(state.temperature)
    top = params.inv_ls * a11.top
    bottom = params.ra - params.inv_ls * a11.bottom
    return rhs, bottom, top


def recover_pressure(state: FlowState, params: PhysParams, tol: float = 1e-4) -> ScalarField:
    """Zero-mean pressure from its Poisson problem with Navier-slip wall data.

    The small discrete solvability defect of the mean mode is absorbed by a
    constant source; a defect above ``tol`` (relative) is rejected.
    """
    d = state.domain
    rhs, bottom, top = pressure_rhs(state, params)
    defect, scale = neumann_mean_defect(rhs, bottom, top)
    if abs(defect) > tol * max(scale, 1e-300) and scale > 0:
        raise IncompatiblePressureError(
            f"pressure data violate the mean constraint: defect {defect:.3e} (scale {scale:.3e})"
        )
    coeffs, _ = _solve_modes(
        d,
        0.0,
        ("neumann", "neumann"),
        to_spectral(rhs.values),
        _bc_coeffs(Neumann(bottom), d),
        _bc_coeffs(Neumann(top), d),
    )
    return ScalarField(d, to_physical(coeffs, d.nx))
