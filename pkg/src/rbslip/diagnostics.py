"""Functionals, balances and inequality checks on flow states and trajectories.

Single-state quantities are gathered by :func:`sample_record` into a flat
dict of raw domain integrals.  :class:`TimeAverager` accumulates such records
with trapezoidal time weights; run-level functions (Nusselt routes, balances,
interpolation bound) accept either an averager or a single record wrapped by
:meth:`TimeAverager.single`.

Averages ``<.>`` include the horizontal mean, so a domain integral is divided
by the aspect ratio before entering a Nusselt-type quantity.
"""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .grid import Domain, ScalarField, partial_weights
from .operators import to_physical, to_spectral

__all__ = [
    "Check",
    "Localized",
    "TimeAverager",
    "INTERP_CONSTANT",
    "INTERP_CONSTANT_STRICT",
    "TRACE_CONSTANT",
    "kinematics",
    "sample_record",
    "nusselt_profile",
    "nusselt_flux",
    "nusselt_grad",
    "nusselt_localized",
    "min_localization_delta",
    "energy_balance",
    "enstrophy_balance",
    "energy_residual",
    "enstrophy_residual",
    "pressure_identity",
    "trace_inequality",
    "pressure_bound_check",
    "interpolation_check",
    "hessian_check",
    "grad_identity_check",
    "hessian_bound_ratio",
    "velocity_w14",
    "run_summary",
]

#: Constant of the near-wall interpolation bound as used by the acceptance
#: suite.  Tracking every factor (including the 2 in d(f^2) = 2 f f') gives
#: the larger value ``INTERP_CONSTANT_STRICT``.
INTERP_CONSTANT = 2.0 / 25.0
INTERP_CONSTANT_STRICT = 4.0 / 25.0
TRACE_CONSTANT = 3.0

Check = namedtuple("Check", "margin lhs rhs")
Localized = namedtuple("Localized", "exact bound")

_TINY = 1e-300


# ---------------------------------------------------------------------------
# pointwise kinematics

class _Spectral:
    """Derivatives of one field, computed in Fourier x Chebyshev space."""

    def __init__(self, f: ScalarField):
        self.d = f.domain
        self.hat = to_spectral(f.values)
        ik = 1j * self.d.wavenumbers
        if self.d.nx % 2 == 0:
            ik = ik.copy()
            ik[-1] = 0.0
        self.ik = ik[:, None]

    def __call__(self, nx1: int, nx2: int) -> np.ndarray:
        c = self.hat * self.ik**nx1 if nx1 else self.hat
        for _ in range(nx2):
            c = c @ self.d.dz_matrix.T
        return to_physical(c, self.d.nx)


@dataclass
class Kinematics:
    """Velocity, its first and second derivatives, vorticity and temperature
    gradients as plain ``(nx, nz)`` arrays."""

    domain: Domain
    u1: np.ndarray
    u2: np.ndarray
    grad: dict  # "11" = d1 u1, "12" = d2 u1, "21" = d1 u2, "22" = d2 u2
    hess: dict  # "u1_11", "u1_12", ...
    curl: np.ndarray  # d1 u2 - d2 u1 from the stream function
    curl_grad: tuple
    omega: np.ndarray  # prognostic vorticity
    omega_grad: tuple
    temp: np.ndarray
    temp_grad: tuple


def kinematics(state) -> Kinematics:
    """All derivative fields needed by the diagnostics, from one state."""
    d = state.domain
    ps = _Spectral(state.streamfunction)
    p = {(a, b): ps(a, b) for a in range(4) for b in range(4) if 1 <= a + b <= 3}
    u1, u2 = -p[0, 1], p[1, 0]
    grad = {"11": -p[1, 1], "12": -p[0, 2], "21": p[2, 0], "22": p[1, 1]}
    hess = {
        "u1_11": -p[2, 1], "u1_12": -p[1, 2], "u1_22": -p[0, 3],
        "u2_11": p[3, 0], "u2_12": p[2, 1], "u2_22": p[1, 2],
    }
    curl = p[2, 0] + p[0, 2]
    curl_grad = (p[3, 0] + p[1, 2], p[2, 1] + p[0, 3])
    om = _Spectral(state.vorticity)
    th = _Spectral(state.temperature)
    return Kinematics(
        d, u1, u2, grad, hess, curl, curl_grad,
        state.vorticity.values, (om(1, 0), om(0, 1)),
        state.temperature.values, (th(1, 0), th(0, 1)),
    )


def _int(d: Domain, v: np.ndarray) -> float:
    return float(d.gamma * (v.mean(axis=0) @ d.quad_weights))


def _wall(d: Domain, v: np.ndarray) -> float:
    """Sum of the x1-integrals of ``v`` over both walls."""
    return float(d.gamma * (v[:, 0].mean() + v[:, -1].mean()))


def _hess_sq(k: Kinematics) -> np.ndarray:
    h = k.hess
    return (h["u1_11"] ** 2 + 2 * h["u1_12"] ** 2 + h["u1_22"] ** 2
            + h["u2_11"] ** 2 + 2 * h["u2_12"] ** 2 + h["u2_22"] ** 2)


def _grad_u_sq(k: Kinematics) -> np.ndarray:
    g = k.grad
    return g["11"] ** 2 + g["12"] ** 2 + g["21"] ** 2 + g["22"] ** 2


# ---------------------------------------------------------------------------
# single-state checks

def nusselt_profile(state) -> np.ndarray:
    """Horizontal mean of ``u2 T - d2 T`` at every vertical node."""
    k = kinematics(state) if not isinstance(state, Kinematics) else state
    return (k.u2 * k.temp - k.temp_grad[1]).mean(axis=0)


def grad_identity_check(state) -> float:
    """Relative gap between ``||grad u||`` and ``||omega||`` (omega = curl u)."""
    k = state if isinstance(state, Kinematics) else kinematics(state)
    a = math.sqrt(max(_int(k.domain, _grad_u_sq(k)), 0.0))
    b = math.sqrt(max(_int(k.domain, k.curl**2), 0.0))
    if b == 0.0:
        return 0.0 if a == 0.0 else math.inf
    return abs(a - b) / b


def hessian_check(state, ls: float | None = None) -> dict:
    """``||grad^2 u||`` against ``||grad omega||``.

    With ``ls`` given the wall term ``-(2/ls) sum_walls int (d1 u1)^2`` of the
    exact identity ``||grad^2 u||^2 = ||grad omega||^2 + wall`` is reported
    as well.
    """
    k = state if isinstance(state, Kinematics) else kinematics(state)
    d = k.domain
    hess = math.sqrt(max(_int(d, _hess_sq(k)), 0.0))
    gw = math.sqrt(max(_int(d, k.curl_grad[0] ** 2 + k.curl_grad[1] ** 2), 0.0))
    out = {"hess_l2": hess, "grad_omega_l2": gw, "margin": gw - hess}
    if ls is not None:
        inv = 0.0 if math.isinf(ls) else 1.0 / ls
        out["boundary_term"] = -2.0 * inv * _wall(d, k.grad["11"] ** 2)
    return out


def pressure_identity(state, p: ScalarField, params) -> dict:
    """Both sides of the pressure energy identity and its relative residual."""
    k = state if isinstance(state, Kinematics) else kinematics(state)
    d = k.domain
    sp = _Spectral(p)
    p1, p2 = sp(1, 0), sp(0, 1)
    pv = p.values
    g = k.grad
    q = g["11"] ** 2 + 2 * g["12"] * g["21"] + g["22"] ** 2
    lhs = _int(d, p1**2 + p2**2)
    wall = params.inv_ls * _wall(d, pv * g["11"])
    inertial = params.inv_pr * _int(d, pv * q)
    buoyancy = params.ra * _int(d, p2 * k.temp)
    rhs = wall + inertial + buoyancy
    scale = max(abs(lhs), abs(wall) + abs(inertial) + abs(buoyancy))
    rel = 0.0 if scale == 0.0 else abs(lhs - rhs) / scale
    return {
        "lhs": lhs,
        "rhs_terms": {"wall": wall, "inertial": inertial, "buoyancy": buoyancy},
        "rel_residual": rel,
    }


def _pressure_h1(p: ScalarField) -> float:
    sp = _Spectral(p)
    d = p.domain
    return math.sqrt(max(_int(d, p.values**2 + sp(1, 0) ** 2 + sp(0, 1) ** 2), 0.0))


def trace_inequality(state, p: ScalarField) -> Check:
    """``|int p d1u1 |_1 + int p d1u1 |_0| <= 3 ||p||_H1 ||d2 u||``."""
    k = state if isinstance(state, Kinematics) else kinematics(state)
    d = k.domain
    lhs = abs(_wall(d, p.values * k.grad["11"]))
    d2u = math.sqrt(max(_int(d, k.grad["12"] ** 2 + k.grad["22"] ** 2), 0.0))
    rhs = TRACE_CONSTANT * _pressure_h1(p) * d2u
    return Check(rhs - lhs, lhs, rhs)


def pressure_bound_check(state, p: ScalarField, params, r: float = 4.0) -> dict:
    """Ratio ``||p||_H1 / (||d2u||/ls + ||w||_2 ||w||_r / Pr + Ra ||T||_2)``.

    The ratio is ``nan`` when both parts vanish.
    """
    if not r > 2:
        raise ValueError(f"r must exceed 2, got {r}")
    k = state if isinstance(state, Kinematics) else kinematics(state)
    d = k.domain
    d2u = math.sqrt(max(_int(d, k.grad["12"] ** 2 + k.grad["22"] ** 2), 0.0))
    w2 = math.sqrt(max(_int(d, k.omega**2), 0.0))
    wr = max(_int(d, np.abs(k.omega) ** r), 0.0) ** (1.0 / r)
    t2 = math.sqrt(max(_int(d, k.temp**2), 0.0))
    bracket = params.inv_ls * d2u + params.inv_pr * w2 * wr + params.ra * t2
    ph1 = _pressure_h1(p)
    if bracket == 0.0:
        ratio = math.nan if ph1 == 0.0 else math.inf
    else:
        ratio = ph1 / bracket
    return {"pressure_h1": ph1, "bracket": bracket, "ratio": ratio}


def velocity_w14(state) -> float:
    """``W^{1,4}`` norm of the velocity (Euclidean and Frobenius pointwise)."""
    k = state if isinstance(state, Kinematics) else kinematics(state)
    d = k.domain
    u4 = (k.u1**2 + k.u2**2) ** 2
    g4 = _grad_u_sq(k) ** 2
    return max(_int(d, u4) + _int(d, g4), 0.0) ** 0.25


# ---------------------------------------------------------------------------
# records and time averages

def sample_record(state, params, deltas=(0.05, 0.1, 0.2), pressure: bool = True) -> dict:
    """Raw integrals of one state (domain integrals, no horizontal mean)."""
    from .solver import recover_pressure

    k = kinematics(state)
    d = k.domain
    g = k.grad
    temp = k.temp
    rec = {"time": float(state.time)}
    rec["nu_profile"] = (k.u2 * temp - k.temp_grad[1]).mean(axis=0)
    rec["u2T_profile"] = (k.u2 * temp).mean(axis=0)
    rec["nu_flux"] = float(rec["nu_profile"] @ d.quad_weights)
    rec["grad_T_sq"] = _int(d, k.temp_grad[0] ** 2 + k.temp_grad[1] ** 2)
    rec["d2T_sq"] = _int(d, k.temp_grad[1] ** 2)
    rec["u_sq"] = _int(d, k.u1**2 + k.u2**2)
    grad_u_sq = _grad_u_sq(k)
    rec["grad_u_sq"] = _int(d, grad_u_sq)
    rec["wall_u1_sq"] = _wall(d, k.u1**2)
    rec["tu2"] = _int(d, temp * k.u2)
    rec["omega_sq"] = _int(d, k.omega**2)
    rec["grad_omega_sq"] = _int(d, k.omega_grad[0] ** 2 + k.omega_grad[1] ** 2)
    rec["omega_dxT"] = _int(d, k.omega * k.temp_grad[0])
    rec["hess_u_sq"] = _int(d, _hess_sq(k))
    rec["omega_l4"] = max(_int(d, k.omega**4), 0.0) ** 0.25
    rec["t_min"] = float(temp.min())
    rec["t_max"] = float(temp.max())
    div = g["11"] + g["22"]
    rec["div_rel"] = math.sqrt(max(_int(d, div**2), 0.0) / max(rec["grad_u_sq"], _TINY)) if rec["grad_u_sq"] > 0 else 0.0
    rec["u2_mean_max"] = float(np.abs(k.u2.mean(axis=0)).max())
    rec["grad_iden_rel_err"] = grad_identity_check(k)
    h = hessian_check(k)
    rec["hessian_margin"] = h["margin"] / h["grad_omega_l2"] if h["grad_omega_l2"] > 0 else 0.0
    single = TimeAverager.single(rec, params)
    rec["interp_margin"] = min(interpolation_check(single, dl).margin for dl in deltas) if deltas else math.nan
    if pressure:
        p = recover_pressure(state, params)
        rec["p_wall"] = _wall(d, p.values * g["11"])
        pid = pressure_identity(k, p, params)
        rec["pressure_resid"] = pid["rel_residual"]
        rec["trace_margin"] = trace_inequality(k, p).margin
        pb = pressure_bound_check(k, p, params)
        rec["pressure_h1"] = pb["pressure_h1"]
        rec["pressure_ratio"] = pb["ratio"]
    return rec


class TimeAverager:
    """Trapezoid-weighted time means of record entries with ``time >= t_start``.

    A window with a single sample returns that sample.
    """

    def __init__(self, params, t_start: float = 0.0):
        self.params = params
        self.t_start = float(t_start)
        self._sums: dict = {}
        self._last: dict | None = None
        self._first_time: float | None = None
        self.samples = 0

    @classmethod
    def single(cls, record: dict, params) -> "TimeAverager":
        avg = cls(params, t_start=record.get("time", 0.0))
        avg.add(record)
        return avg

    def add(self, record: dict) -> None:
        t = float(record["time"])
        if t < self.t_start:
            return
        rec = {k: v for k, v in record.items() if k != "time" and v is not None}
        if self._last is not None:
            t_prev, prev = self._last
            if t <= t_prev:
                raise ValueError("samples must be added in increasing time order")
            w = 0.5 * (t - t_prev)
            for key, val in rec.items():
                if key in prev:
                    self._sums[key] = self._sums.get(key, 0.0) + w * (np.asarray(prev[key], float) + np.asarray(val, float))
        else:
            self._first_time = t
        self._last = (t, rec)
        self.samples += 1

    @property
    def duration(self) -> float:
        if self._last is None:
            return 0.0
        return self._last[0] - self._first_time

    def keys(self):
        return [] if self._last is None else list(self._last[1].keys())

    def __contains__(self, key) -> bool:
        return self._last is not None and key in self._last[1]

    def mean(self, key):
        if self._last is None:
            raise ValueError("empty averaging window")
        if key not in self._last[1]:
            raise KeyError(key)
        if self.duration == 0.0:
            v = self._last[1][key]
        else:
            v = self._sums[key] / self.duration
        return float(v) if np.ndim(v) == 0 else np.asarray(v)

    def averages(self) -> dict:
        return {k: self.mean(k) for k in self.keys()}

    @property
    def gamma(self) -> float:
        return self.params.gamma


def _avg(avg: TimeAverager, key: str):
    return avg.mean(key)


# ---------------------------------------------------------------------------
# run-level quantities

def nusselt_flux(avg: TimeAverager) -> float:
    """Vertical quadrature of the averaged ``<u2 T - d2 T>`` profile."""
    return float(_avg(avg, "nu_flux"))


def nusselt_grad(avg: TimeAverager) -> float:
    """``<int |grad T|^2>`` with the horizontal mean."""
    return float(_avg(avg, "grad_T_sq")) / avg.gamma


def min_localization_delta(domain: Domain) -> float:
    """Smallest ``delta`` with at least two vertical nodes in ``[0, delta]``."""
    return float(domain.vertical_nodes[1])


def nusselt_localized(avg: TimeAverager, delta: float, domain: Domain | None = None) -> Localized:
    """Near-wall averaged flux ``(1/delta) int_0^delta N`` and its upper bound
    ``(1/delta) int_0^delta <u2 T> + 1/delta``."""
    prof = np.asarray(_avg(avg, "nu_profile"))
    nz = prof.shape[0]
    d = domain if domain is not None else Domain(avg.gamma, 8, nz)
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    dmin = min_localization_delta(d)
    if delta < dmin:
        raise ValueError(f"delta = {delta:g} resolves fewer than 2 grid nodes; minimum representable delta is {dmin:.6g}")
    w = partial_weights(d, delta)
    exact = float(w @ prof) / delta
    bound = float(w @ np.asarray(_avg(avg, "u2T_profile"))) / delta + 1.0 / delta
    return Localized(exact, bound)


def profile_flatness(avg: TimeAverager) -> float:
    """``max_z |<N(z)> - <N(0)>| / <N(0)>``."""
    prof = np.asarray(_avg(avg, "nu_profile"))
    ref = prof[0]
    return float(np.abs(prof - ref).max() / abs(ref)) if ref != 0 else math.inf


def energy_balance(avg: TimeAverager) -> dict:
    """Long-time energy balance and the dissipation bound ``<|grad u|^2> <= Nu Ra``."""
    p = avg.params
    gam = avg.gamma
    diss = float(_avg(avg, "grad_u_sq")) / gam
    wall = p.inv_ls * float(_avg(avg, "wall_u1_sq")) / gam
    buoy = p.ra * float(_avg(avg, "tu2")) / gam
    res = diss + wall - buoy
    scale = max(abs(buoy), diss + wall)
    nu = nusselt_flux(avg)
    return {
        "lhs_dissipation": diss,
        "wall_term": wall,
        "rhs_buoyancy": buoy,
        "residual": res,
        "rel_residual": 0.0 if scale == 0.0 else abs(res) / scale,
        "nu_from_buoyancy": float(_avg(avg, "tu2")) / gam + 1.0,
        "dissipation_bound": nu * p.ra,
        "dissipation_bound_ok": diss <= nu * p.ra * (1 + 1e-12) + 1e-12,
    }


def enstrophy_balance(avg: TimeAverager) -> dict:
    """``<|grad w|^2> <= |<wall pressure>|/ls + Nu Ra^(3/2)`` and its margin."""
    if "p_wall" not in avg:
        raise ValueError("enstrophy balance needs pressure samples (record with pressure=True)")
    p = avg.params
    gam = avg.gamma
    lhs = float(_avg(avg, "grad_omega_sq")) / gam
    wall = p.inv_ls * abs(float(_avg(avg, "p_wall"))) / gam
    nu_ra = nusselt_flux(avg) * p.ra**1.5
    rhs = wall + nu_ra
    return {
        "grad_omega_sq": lhs,
        "wall_pressure": wall,
        "nu_ra_32": nu_ra,
        "rhs": rhs,
        "margin": rhs - lhs,
        "rel_margin": (rhs - lhs) / rhs if rhs > 0 else 0.0,
    }


def interpolation_check(avg: TimeAverager, delta: float, constant: float = INTERP_CONSTANT,
                        domain: Domain | None = None) -> Check:
    """Near-wall convective flux against the interpolation bound."""
    prof = np.asarray(_avg(avg, "u2T_profile"))
    nz = prof.shape[0]
    d = domain if domain is not None else Domain(avg.gamma, 8, nz)
    gam = avg.gamma
    lhs = float(partial_weights(d, delta) @ prof) / delta
    a = float(_avg(avg, "grad_u_sq")) / gam
    b = float(_avg(avg, "hess_u_sq")) / gam
    rhs = 0.5 * float(_avg(avg, "d2T_sq")) / gam + constant * delta**3 * math.sqrt(max(a, 0.0) * max(b, 0.0))
    return Check(rhs - lhs, lhs, rhs)


def hessian_bound_ratio(avg: TimeAverager, u0_w14: float) -> float:
    """``<||grad^2 u||^2>`` over the Hessian-estimate bracket (constant 1)."""
    p = avg.params
    nu = nusselt_flux(avg)
    if nu <= 0 or p.ra == 0:
        return math.nan
    inv_ls = p.inv_ls
    bracket = (
        inv_ls**2
        + max(1.0, inv_ls**3) * (u0_w14 + p.ra) * p.inv_pr * inv_ls
        + inv_ls * nu**-0.5 * p.ra**0.5
        + p.ra**0.5
    ) * nu * p.ra
    return float(_avg(avg, "hess_u_sq")) / avg.gamma / bracket


# ---------------------------------------------------------------------------
# instantaneous balances (centred differences over three samples)

def _centred(prev: dict, nxt: dict, key: str) -> float:
    dt = nxt["time"] - prev["time"]
    if not dt > 0:
        raise ValueError("samples must be in increasing time order")
    return (nxt[key] - prev[key]) / dt


def energy_residual(prev: dict, cur: dict, nxt: dict, params) -> float:
    """``(1/2Pr) d/dt ||u||^2 + ||grad u||^2 + wall/ls - Ra int T u2`` at ``cur``."""
    ddt = _centred(prev, nxt, "u_sq")
    return (0.5 * params.inv_pr * ddt + cur["grad_u_sq"] + params.inv_ls * cur["wall_u1_sq"]
            - params.ra * cur["tu2"])


def enstrophy_residual(prev: dict, cur: dict, nxt: dict, params) -> float:
    """Vorticity-tested balance with the pressure wall term at ``cur``.

    ``(1/2Pr) d/dt(||w||^2 + |u1|^2_walls/ls) + ||grad w||^2
    - (1/ls)(int p d1u1 |_0 + int p d1u1 |_1) - Ra int w d1 T``.
    """
    if "p_wall" not in cur:
        raise ValueError("enstrophy residual needs pressure samples")
    inv_ls = params.inv_ls
    e = {k: r["omega_sq"] + inv_ls * r["wall_u1_sq"] for k, r in (("p", prev), ("n", nxt))}
    dt = nxt["time"] - prev["time"]
    if not dt > 0:
        raise ValueError("samples must be in increasing time order")
    ddt = (e["n"] - e["p"]) / dt
    return (0.5 * params.inv_pr * ddt + cur["grad_omega_sq"] - inv_ls * cur["p_wall"]
            - params.ra * cur["omega_dxT"])


# ---------------------------------------------------------------------------
# run summary

def run_summary(records: list, params, t_avg_start: float, deltas=(0.05, 0.1, 0.2),
                domain: Domain | None = None) -> dict:
    """Averaged diagnostics and extreme monitors of a sampled run."""
    avg = TimeAverager(params, t_avg_start)
    for r in records:
        avg.add(r)
    if avg.samples == 0 and records:
        avg = TimeAverager.single(records[-1], params)
    out = {
        "nu_flux": nusselt_flux(avg),
        "nu_grad": nusselt_grad(avg),
        "nu_profile_flat": profile_flatness(avg),
    }
    for dl in deltas:
        out[f"nu_local_{dl:g}"] = nusselt_localized(avg, dl, domain).exact
    out["energy_resid"] = energy_balance(avg)["rel_residual"]
    out["enstrophy_margin"] = enstrophy_balance(avg)["rel_margin"] if "p_wall" in avg else math.nan
    window = [r for r in records if r["time"] >= t_avg_start] or records[-1:]
    out["trace_margin_min"] = min((r["trace_margin"] for r in window if "trace_margin" in r), default=math.nan)
    out["interp_margin_min"] = min(
        [r["interp_margin"] for r in window] + [interpolation_check(avg, dl, domain=domain).margin for dl in deltas]
    )
    out["grad_iden_max_err"] = max(r["grad_iden_rel_err"] for r in records)
    out["hessian_margin_min"] = min(r["hessian_margin"] for r in records)
    out["omega_l4_max"] = max(r["omega_l4"] for r in records)
    out["t_min"] = min(r["t_min"] for r in records)
    out["t_max"] = max(r["t_max"] for r in records)
    out["samples"] = avg.samples
    # last half of the averaging window vs the whole window: convergence indicator only
    out["nu_tail_drift"] = math.nan
    if avg.duration > 0:
        t_end = max(r["time"] for r in records)
        tail = TimeAverager(params, t_end - 0.5 * avg.duration)
        for r in records:
            tail.add(r)
        if tail.duration > 0 and out["nu_flux"] != 0:
            out["nu_tail_drift"] = abs(nusselt_flux(tail) - out["nu_flux"]) / abs(out["nu_flux"])
    out["averager"] = avg
    return out
