import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbslip.grid import (
    Domain,
    ScalarField,
    VectorField,
    cheb_diff_matrix,
    clenshaw_curtis,
    horizontal_average,
    integrate,
    norm,
    partial_weights,
    sobolev_norm,
    vertical_integral,
    wall_trace_integral,
)
from rbslip.operators import gradient


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain(2.0, 7, 33)
    with pytest.raises(ValueError):
        Domain(2.0, 32, 5)
    with pytest.raises(ValueError):
        Domain(-1.0, 32, 33)


def test_nodes_cover_unit_interval():
    d = Domain(2.0, 16, 17)
    z = d.vertical_nodes
    assert z[0] == 0.0 and z[-1] == 1.0
    assert np.all(np.diff(z) > 0)
    assert np.allclose(d.x, np.arange(16) * 2.0 / 16)


def test_quadrature_exact_on_polynomials():
    d = Domain(2.0, 8, 17)
    w = d.quad_weights
    for p in range(0, 12):
        assert w @ d.z**p == pytest.approx(1.0 / (p + 1), abs=1e-14)


def test_derivative_matrix_exact_on_cubic():
    d = Domain(1.0, 8, 9)
    z = d.z
    assert np.allclose(d.dz_matrix @ z**3, 3 * z**2, atol=1e-12)
    assert np.allclose(d.dz2_matrix @ z**3, 6 * z, atol=1e-10)
    dm, x = cheb_diff_matrix(8)
    assert np.allclose(dm @ x**2, 2 * x, atol=1e-12)


def test_clenshaw_curtis_sum():
    assert clenshaw_curtis(16).sum() == pytest.approx(2.0, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.02, 1.0), st.integers(0, 8))
def test_partial_weights_integrate_monomials(delta, p):
    d = Domain(1.0, 8, 33)
    w = partial_weights(d, delta)
    assert w @ d.z**p == pytest.approx(delta ** (p + 1) / (p + 1), rel=1e-10, abs=1e-14)


def test_partial_weights_reject_bad_delta():
    d = Domain(1.0, 8, 17)
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            partial_weights(d, bad)


def test_integrals_and_norms():
    d = Domain(2.0, 32, 33)
    x, z = d.mesh()
    f = d.field(np.sin(2 * np.pi * x / 2.0) * z)
    assert integrate(f) == pytest.approx(0.0, abs=1e-14)
    g = d.field(z**2)
    assert integrate(g) == pytest.approx(2.0 / 3.0, rel=1e-13)
    assert norm(g, 2) == pytest.approx(math.sqrt(2.0 / 5.0), rel=1e-12)
    assert norm(g, 1) == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert norm(g, 4) == pytest.approx((2.0 / 9.0) ** 0.25, rel=1e-12)
    assert norm(g, np.inf) == 1.0
    assert vertical_integral(z[0] ** 2, d) == pytest.approx(1.0 / 3.0)
    with pytest.raises(ValueError):
        norm(g, 3)


def test_sobolev_norms():
    d = Domain(2.0, 32, 33)
    x, z = d.mesh()
    f = d.field(z)
    # int z^2 + int 1 over the 2 x 1 box
    assert sobolev_norm(f, "H1", gradient) == pytest.approx(math.sqrt(2.0 / 3.0 + 2.0), rel=1e-12)
    assert sobolev_norm(f, "W14", gradient) == pytest.approx((2.0 / 5.0 + 2.0) ** 0.25, rel=1e-12)
    with pytest.raises(ValueError):
        sobolev_norm(f, "H2", gradient)


def test_wall_traces_and_horizontal_average():
    d = Domain(2.0, 16, 17)
    x, z = d.mesh()
    f = d.field(1.0 + z + np.cos(np.pi * x))
    assert wall_trace_integral(f, "bottom") == pytest.approx(2.0)
    assert wall_trace_integral(f, "top") == pytest.approx(4.0)
    assert np.allclose(horizontal_average(f), 1.0 + d.z)
    with pytest.raises(ValueError):
        wall_trace_integral(f, "left")


def test_field_arithmetic_and_validation():
    d = Domain(2.0, 8, 9)
    a = d.field(np.ones((8, 9)))
    b = 2 * a + 1 - a / 2
    assert np.allclose(b.values, 2.5)
    assert np.allclose((-a).values, -1) and np.allclose((a**2).values, 1)
    with pytest.raises(ValueError):
        ScalarField(d, np.ones((8, 8)))
    with pytest.raises(ValueError):
        a + Domain(2.0, 8, 11).zeros()
    with pytest.raises(ValueError):
        VectorField(a, Domain(1.0, 8, 9).zeros())
    nanf = d.field(np.full((8, 9), np.nan))
    with pytest.raises(ValueError):
        integrate(nanf)
