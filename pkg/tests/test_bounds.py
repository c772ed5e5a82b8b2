import math
from fractions import Fraction as F

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from rbslip.bounds import (
    TERMS,
    band_distance,
    bound_terms,
    bound_value,
    delta_bruteforce,
    delta_optimal,
    delta_scaling,
    localization_rhs,
    region_classify,
)
from rbslip.solver import PhysParams

log_ra = st.floats(1.0, 12.0)
log_pr = st.floats(-3.0, 20.0)
log_ls = st.floats(-4.0, 4.0)


def test_free_slip_value():
    rep = bound_value(PhysParams(1e6, 1.0, math.inf))
    assert rep.region_label == "FREE_SLIP_512"
    assert rep.dominant_term == "RA_5_12"
    assert rep.value == pytest.approx(10**2.5, rel=1e-12)
    assert rep.exponents == (F(5, 12), 0, 0)
    assert 0 < rep.delta_star <= 1


def test_ls_ge_1_mixed_dominant():
    rep = bound_value(PhysParams(1e6, 10.0, 10.0))
    assert rep.region_label == "LS_GE1_MIXED"
    assert rep.dominant_term == "LS_16_PR_16_RA_12"
    assert region_classify(PhysParams(1e6, 10.0, 10.0)).condition == "1 <= Ls <= Pr^(-1) Ra^(1/2)"


def test_large_prandtl_intermediate_slip():
    prm = PhysParams(1e4, 1e7, 0.1)
    rep = bound_value(prm)
    assert rep.region_label == "LS_LT1_MIXED"
    assert rep.dominant_term == "LS_213_RA_513"
    cell = region_classify(prm)
    assert cell.band == "Ra^(11/7) <= Pr" and cell.term == "LS_213_RA_513"


def test_table_examples():
    ra = 1e4
    cell = region_classify(PhysParams(ra, ra**2, 1.0))
    assert cell.band == "Ra^(11/7) <= Pr" and cell.term == "RA_5_12"
    pr = ra**1.5
    ls = 0.5 * pr ** (-13 / 40) * ra ** (9 / 40)
    cell = region_classify(PhysParams(ra, pr, ls))
    assert cell.band == "Ra^(4/3) <= Pr <= Ra^(11/7)" and cell.term == "LS_23_PR_16_RA_12"


def test_rejects_bad_slip_length():
    with pytest.raises(ValueError):
        bound_terms(1e4, 1.0, 0.0)
    with pytest.raises(ValueError):
        bound_terms(1e4, 1.0, -1.0)
    with pytest.raises(ValueError):
        bound_value(PhysParams(0.0))
    with pytest.raises(ValueError):
        region_classify(PhysParams(0.5))


def test_five_laws_symbolic():
    ra, pr, ls = sp.symbols("Ra Pr Ls", positive=True)
    laws = {
        "LS_13_RA_13": (ra / ls) ** sp.Rational(1, 3),
        "LS_213_RA_513": (ls ** sp.Rational(-2, 5) * ra) ** sp.Rational(5, 13),
        "RA_5_12": ra ** sp.Rational(5, 12),
        "LS_23_PR_16_RA_12": pr ** sp.Rational(-1, 6) * (ls ** sp.Rational(-4, 3) * ra) ** sp.Rational(1, 2),
        "LS_16_PR_16_RA_12": pr ** sp.Rational(-1, 6) * (ls ** sp.Rational(-1, 3) * ra) ** sp.Rational(1, 2),
    }
    assert set(laws) == set(TERMS)
    for label, law in laws.items():
        t = TERMS[label]
        ours = ra ** sp.Rational(t.ra) * pr ** sp.Rational(t.pr) * ls ** sp.Rational(t.ls)
        assert sp.simplify(sp.powsimp(sp.expand_power_base(law / ours, force=True), force=True)) == 1


def test_every_law_is_reachable():
    seen = set()
    rng = np.random.default_rng(0)
    for _ in range(4000):
        prm = PhysParams(10 ** rng.uniform(1, 12), 10 ** rng.uniform(-3, 20), 10 ** rng.uniform(-4, 4))
        seen.add(region_classify(prm).term)
    assert seen == set(TERMS)


@settings(max_examples=300, deadline=None)
@given(log_ra, log_pr, log_ls, st.floats(0.01, 1.0))
def test_monotonicity(lra, lpr, lls, step):
    base = bound_value(PhysParams(10**lra, 10**lpr, 10**lls)).value
    assert bound_value(PhysParams(10 ** (lra + step), 10**lpr, 10**lls)).value >= base * (1 - 1e-12)
    assert bound_value(PhysParams(10**lra, 10 ** (lpr + step), 10**lls)).value <= base * (1 + 1e-12)
    assert bound_value(PhysParams(10**lra, 10**lpr, 10 ** (lls + step))).value <= base * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(log_ra, log_pr)
def test_continuity_at_unit_slip(lra, lpr):
    ra, pr = 10**lra, 10**lpr
    ge = sum(bound_terms(ra, pr, 1.0, "LS_GE1_MIXED").values())
    lt = sum(bound_terms(ra, pr, 1.0, "LS_LT1_MIXED").values())
    assert 0.25 <= lt / ge <= 4.0


@settings(max_examples=300, deadline=None)
@given(log_ra, log_pr, log_ls)
def test_dominant_term_is_max(lra, lpr, lls):
    prm = PhysParams(10**lra, 10**lpr, 10**lls)
    rep = bound_value(prm)
    terms = bound_terms(prm.ra, prm.pr, prm.ls)
    assert terms[rep.dominant_term] == max(terms.values())
    assert rep.value == pytest.approx(sum(terms.values()))
    assert 0 < rep.delta_star <= 1


def test_classification_matches_dominant_term():
    rng = np.random.default_rng(42)
    agree = checked = 0
    for _ in range(10_000):
        prm = PhysParams(10 ** rng.uniform(1, 12), 10 ** rng.uniform(-3, 20), 10 ** rng.uniform(-4, 4))
        if band_distance(prm) < 0.05:
            continue
        checked += 1
        agree += region_classify(prm).term == bound_value(prm).dominant_term
    assert checked > 9000
    assert agree == checked


def test_delta_scaling_free_slip_example():
    d, branch = delta_scaling(PhysParams(1e6, 1.0, math.inf), 10**2.5)
    assert branch == "free_slip"
    assert d == pytest.approx(10 ** (-30 / 16) * 10 ** (-2.5 / 4), rel=1e-12)


def test_delta_scaling_branches():
    assert delta_scaling(PhysParams(1e6, 1.0, 3.0), 10.0)[1] == "ls_ge_1"
    branches = {delta_scaling(PhysParams(1e6, 1.0, ls), nu)[1] for ls in (1e-3, 0.5) for nu in (1.0, 1e6)}
    assert branches <= {"ls_lt_1_a", "ls_lt_1_b"} and branches


@pytest.mark.parametrize("ls", [1.0, 3.0, 100.0])
def test_stationarity_ls_ge_1(ls):
    prm = PhysParams(1e6, 2.0, ls)
    nu = 20.0
    d = delta_optimal(prm, nu)
    h = 1e-6 * d
    deriv = (localization_rhs(prm, nu, d + h) - localization_rhs(prm, nu, d - h)) / (2 * h)
    assert abs(deriv) < 1e-6 * 2 / d**2
    # A = Ls^-1/2 Pr^-1/2 Ra^3/2 + Ra^5/4 dominates the coefficient for large Ra
    a = ls**-0.5 * prm.pr**-0.5 * prm.ra**1.5 + prm.ra**1.25
    d_const_free = nu**-0.25 * a**-0.25
    assert d_const_free == pytest.approx(delta_scaling(prm, nu)[0], rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(2.0, 12.0), log_pr, st.one_of(log_ls, st.just(math.inf)), st.floats(0.0, 3.0))
def test_bruteforce_matches_optimal(lra, lpr, lls, lnu):
    ls = 10**lls if math.isfinite(lls) else math.inf
    prm = PhysParams(10**lra, 10**lpr, ls)
    nu = 10**lnu
    opt = delta_optimal(prm, nu)
    bf = delta_bruteforce(prm, nu)
    assert bf <= 1
    assert abs(math.log(bf) - math.log(opt)) <= 0.01 * abs(math.log(opt)) + 2e-4


def test_bruteforce_decreases_with_ra():
    vals = [delta_bruteforce(PhysParams(ra, 1.0, 0.5), 5.0) for ra in (1e3, 1e5, 1e7, 1e9)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_delta_requires_nu_at_least_one():
    with pytest.raises(ValueError):
        delta_optimal(PhysParams(1e4), 0.5)
    with pytest.raises(ValueError):
        delta_scaling(PhysParams(1e4), 0.5)
    assert delta_optimal(PhysParams(1.0, 1.0, 1e-3), 1.0) <= 1.0
