import math

import numpy as np
import pytest
from scipy import integrate as si

from fields import random_pressure, random_slip_state
from rbslip import diagnostics as dg
from rbslip.grid import Domain
from rbslip.solver import FlowState, PhysParams, conduction_state, recover_pressure


def _static(d, eps):
    """No flow, T = 1 - z + eps sin(pi z) cos(pi x)."""
    x, z = d.mesh()
    t = 1 - z + eps * np.sin(np.pi * z) * np.cos(np.pi * x)
    return FlowState(d.field(t), d.zeros(), d.zeros())


def test_conduction_routes_agree():
    d = Domain(2.0, 16, 33)
    prm = PhysParams(1e3, 1.0, 1.0)
    rec = dg.sample_record(conduction_state(d), prm)
    avg = dg.TimeAverager.single(rec, prm)
    assert dg.nusselt_flux(avg) == pytest.approx(1.0, abs=1e-12)
    assert dg.nusselt_grad(avg) == pytest.approx(1.0, abs=1e-12)
    for delta in (0.05, 0.1, 0.2, 1.0):
        loc = dg.nusselt_localized(avg, delta, d)
        assert loc.exact == pytest.approx(1.0, abs=1e-12)
        assert loc.bound == pytest.approx(1.0 / delta, abs=1e-12)
    assert dg.profile_flatness(avg) < 1e-12


def test_nusselt_grad_static_field():
    eps = 0.2
    d = Domain(2.0, 16, 33)
    prm = PhysParams(0.0, 1.0, 1.0)
    avg = dg.TimeAverager.single(dg.sample_record(_static(d, eps), prm), prm)
    closed = 1 + eps**2 * np.pi**2 / 2

    def integrand(z, x):
        tx = -eps * np.pi * np.sin(np.pi * z) * np.sin(np.pi * x)
        tz = -1 + eps * np.pi * np.cos(np.pi * z) * np.cos(np.pi * x)
        return tx**2 + tz**2

    quad, _ = si.dblquad(integrand, 0, 2, 0, 1, epsabs=1e-13)
    assert quad / 2 == pytest.approx(closed, rel=1e-10)
    assert dg.nusselt_grad(avg) == pytest.approx(closed, rel=1e-12)
    # no flow: profile is -d2T averaged, zero mean mode, so flux = 1
    assert dg.nusselt_flux(avg) == pytest.approx(1.0, abs=1e-12)


def test_flux_is_quadrature_of_profile():
    rng = np.random.default_rng(1)
    d = Domain(2.0, 32, 33)
    s = random_slip_state(d, 1.0, rng)
    rec = dg.sample_record(s, PhysParams(1e3, 1.0, 1.0), pressure=False)
    assert rec["nu_flux"] == pytest.approx(float(rec["nu_profile"] @ d.quad_weights), abs=1e-12)
    assert "p_wall" not in rec


def test_localized_rejects_underresolved_delta():
    d = Domain(2.0, 16, 17)
    prm = PhysParams(1e3)
    avg = dg.TimeAverager.single(dg.sample_record(conduction_state(d), prm, deltas=()), prm)
    dmin = dg.min_localization_delta(d)
    with pytest.raises(ValueError, match="minimum representable delta"):
        dg.nusselt_localized(avg, 0.5 * dmin, d)
    dg.nusselt_localized(avg, dmin, d)
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            dg.nusselt_localized(avg, bad, d)


def test_time_averager_trapezoid():
    prm = PhysParams(1.0)
    avg = dg.TimeAverager(prm, t_start=1.0)
    with pytest.raises(ValueError):
        avg.mean("a")
    ts = np.linspace(0, 3, 31)
    for t in ts:
        avg.add({"time": t, "a": t**2, "v": np.array([t, 1.0])})
    assert avg.duration == pytest.approx(2.0)
    mask = ts >= 1.0 - 1e-12
    ref = np.trapezoid(ts[mask] ** 2, ts[mask]) / 2.0
    assert avg.mean("a") == pytest.approx(ref, rel=1e-12)
    assert np.allclose(avg.mean("v"), [2.0, 1.0])
    with pytest.raises(ValueError):
        avg.add({"time": 2.0, "a": 0.0})


def test_energy_balance_of_static_state():
    d = Domain(2.0, 16, 33)
    prm = PhysParams(100.0, 1.0, 1.0)
    avg = dg.TimeAverager.single(dg.sample_record(_static(d, 0.1), prm), prm)
    eb = dg.energy_balance(avg)
    assert eb["residual"] == 0.0 and eb["rel_residual"] == 0.0
    assert eb["dissipation_bound_ok"]


def test_enstrophy_balance_needs_pressure():
    d = Domain(2.0, 16, 17)
    prm = PhysParams(1e3)
    avg = dg.TimeAverager.single(dg.sample_record(conduction_state(d), prm, pressure=False), prm)
    with pytest.raises(ValueError, match="pressure"):
        dg.enstrophy_balance(avg)


def test_trace_single_mode_has_zero_lhs():
    # d1 u1 vanishes for a horizontally uniform shear flow
    d = Domain(2.0, 16, 33)
    x, z = d.mesh()
    psi = d.field(z**3 / 3 - z**2 / 2 + 0 * x)
    s = FlowState(d.field(1 - z), d.field(2 * z - 1 + 0 * x), psi)
    chk = dg.trace_inequality(s, random_pressure(d, np.random.default_rng(0)))
    assert chk.lhs == 0.0 and chk.margin >= 0


@pytest.mark.parametrize("ls", [0.2, 1.0, 5.0])
def test_trace_and_hessian_on_random_fields(ls):
    rng = np.random.default_rng(int(ls * 100))
    d = Domain(2.0, 32, 33)
    for _ in range(30):
        s = random_slip_state(d, ls, rng)
        k = dg.kinematics(s)
        assert dg.trace_inequality(k, random_pressure(d, rng)).margin >= 0
        h = dg.hessian_check(k, ls)
        assert h["margin"] >= -1e-10 * h["grad_omega_l2"]
        exact = h["grad_omega_l2"] ** 2 + h["boundary_term"]
        assert h["hess_l2"] ** 2 == pytest.approx(exact, rel=1e-8)
        assert dg.grad_identity_check(k) < 1e-10


def test_pressure_bound_nan_for_zero_state():
    d = Domain(2.0, 16, 17)
    prm = PhysParams(0.0, 1.0, 1.0)
    s = FlowState(d.zeros(), d.zeros(), d.zeros())
    out = dg.pressure_bound_check(s, d.zeros(), prm)
    assert math.isnan(out["ratio"])
    with pytest.raises(ValueError):
        dg.pressure_bound_check(s, d.zeros(), prm, r=2)


def test_pressure_bound_ratio_finite_on_random_fields():
    rng = np.random.default_rng(11)
    d = Domain(2.0, 32, 33)
    prm = PhysParams(1e3, 1.0, 0.5)
    ratios = []
    for _ in range(10):
        s = random_slip_state(d, prm.ls, rng)
        p = recover_pressure(s, prm)
        ratios.append(dg.pressure_bound_check(s, p, prm)["ratio"])
    assert np.all(np.isfinite(ratios)) and max(ratios) < 1e3


def test_interpolation_constant_scale_optimized():
    """Rescaling T, the smallest constant that closes the near-wall bound is
    L^2 / (4 A delta^3 sqrt(a b)); it stays below the working constant."""
    rng = np.random.default_rng(3)
    d = Domain(2.0, 32, 33)
    prm = PhysParams(1.0, 1.0, 1.0)
    worst = 0.0
    for ls in (0.1, 1.0, math.inf):
        for _ in range(40):
            s = random_slip_state(d, ls, rng)
            avg = dg.TimeAverager.single(dg.sample_record(s, prm, deltas=(), pressure=False), prm)
            for delta in (0.05, 0.1, 0.2, 0.5):
                chk = dg.interpolation_check(avg, delta, constant=0.0, domain=d)
                big_a = chk.rhs  # 0.5 <d2T^2>
                ab = math.sqrt(avg.mean("grad_u_sq") * avg.mean("hess_u_sq")) / avg.gamma
                needed = chk.lhs**2 / (4 * big_a * delta**3 * ab)
                worst = max(worst, needed)
    assert worst <= dg.INTERP_CONSTANT
    assert dg.INTERP_CONSTANT < dg.INTERP_CONSTANT_STRICT


def test_residual_functions_on_synthetic_records():
    prm = PhysParams(2.0, 4.0, 0.5)
    recs = [
        {"time": t, "u_sq": t**2, "grad_u_sq": 1.0, "wall_u1_sq": 2.0, "tu2": 3.0,
         "omega_sq": t, "grad_omega_sq": 5.0, "p_wall": 1.0, "omega_dxT": 0.5}
        for t in (0.0, 0.5, 1.0)
    ]
    e = dg.energy_residual(*recs, prm)
    assert e == pytest.approx(0.5 / 4 * 1.0 + 1.0 + 2.0 * 2.0 - 2.0 * 3.0)
    w = dg.enstrophy_residual(*recs, prm)
    assert w == pytest.approx(0.5 / 4 * 1.0 + 5.0 - 2.0 * 1.0 - 2.0 * 0.5)
    with pytest.raises(ValueError):
        dg.energy_residual(recs[2], recs[1], recs[0], prm)


def test_run_summary_conduction():
    d = Domain(2.0, 16, 33)
    prm = PhysParams(1e3, 1.0, 1.0)
    recs = []
    for t in (0.0, 0.1, 0.2):
        s = conduction_state(d)
        s = FlowState(s.temperature, s.vorticity, s.streamfunction, t)
        recs.append(dg.sample_record(s, prm))
    out = dg.run_summary(recs, prm, 0.1, domain=d)
    assert out["nu_flux"] == pytest.approx(1.0) and out["nu_grad"] == pytest.approx(1.0)
    assert out["samples"] == 2
    assert out["energy_resid"] == 0.0
