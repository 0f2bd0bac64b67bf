import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import lebedev_rule
from scipy.special import spherical_jn

from vpaw3d.diagnostics import (bessel_asymptotics_probe, cusp_estimate,
                                exponential_coefficients, fit_slope, gaussian_coefficients,
                                leading_coefficient, smooth_step, spherical_average,
                                surviving_parity)
from vpaw3d.pwbasis import build_basis

L = 5.0


@given(st.floats(-10, 10), st.floats(0.01, 100.0),
       st.lists(st.floats(0.1, 1000.0), min_size=3, max_size=8, unique=True))
def test_fit_is_exact_on_power_laws(exponent, prefactor, xs):
    xs = np.array(sorted(xs))
    if xs[-1] / xs[0] < 1.5:
        xs = np.append(xs, 2 * xs[-1])
    fit = fit_slope(xs, prefactor * xs**exponent)
    assert fit.exponent == pytest.approx(exponent, abs=1e-8)
    assert fit.residual < 1e-8
    assert np.allclose(fit.predict(xs), prefactor * xs**exponent, rtol=1e-7)


def test_fit_window_and_errors():
    xs = [1, 2, 4, 8, 16]
    ys = [1, 0.25, 1 / 16, 1 / 64, 1.0]
    assert fit_slope(xs, ys, window=[1, 2, 4, 8]).exponent == pytest.approx(-2)
    with pytest.raises(ValueError):
        fit_slope([1, 2], [1, 2])
    with pytest.raises(ValueError):
        fit_slope(xs, ys, window=[1, 2])
    with pytest.raises(ValueError):
        fit_slope([1, 2, 3], [1, -1, 1])
    with pytest.raises(ValueError):
        fit_slope([1, 2, 3], [1, 2])


def test_spherical_average_of_simple_fields():
    basis = build_basis(L, 3)
    c = np.zeros(basis.size, complex)
    c[basis.index_of([0, 0, 0])] = math.sqrt(L**3)
    assert np.allclose(spherical_average(c, [0.3, 0, 1], [0, 0.5, 2.0], basis), 1.0)
    c[:] = 0
    k = np.array([1, 2, 0])
    c[basis.index_of(k)] = 1.0
    center = np.array([0.4, -0.2, 1.1])
    r = np.array([0.1, 0.7])
    K = 2 * np.pi / L * k
    expect = (np.exp(1j * K @ center) * spherical_jn(0, np.linalg.norm(K) * r)).real / L**1.5
    assert np.allclose(spherical_average(c, center, r, basis), expect, atol=1e-15)


def test_spherical_average_against_lebedev(rng):
    basis = build_basis(L, 5)
    c = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
    c = 0.5 * (c + np.conj(c[::-1]))
    center = np.array([0.5, 0.0, 0.0])
    dirs, w = lebedev_rule(47)
    for radius in (0.05, 0.3):
        pts = center + radius * dirs.T
        vals = (np.exp(1j * pts @ basis.kvectors.T) @ c).real / L**1.5
        assert spherical_average(c, center, radius, basis) == pytest.approx(
            w @ vals / (4 * np.pi), abs=1e-10)


def test_cusp_of_smooth_field_is_flat():
    basis = build_basis(L, 30)
    center = np.array([0.5, 0.0, 0.0])
    smooth = cusp_estimate(gaussian_coefficients(1.0, center, basis), center, basis)
    assert abs(smooth.slope) < 1e-3
    # a narrower Gaussian is still resolved but curves more inside the window
    narrow = cusp_estimate(gaussian_coefficients(0.4, center, basis), center, basis)
    assert abs(narrow.slope) < 0.05


@pytest.mark.parametrize("a", [1.5, 3.0, 6.0])
def test_cusp_of_exponential_recovers_decay_rate(a):
    basis = build_basis(L, 30)
    center = np.array([0.5, 0.0, 0.0])
    est = cusp_estimate(exponential_coefficients(a, center, basis), center, basis)
    assert est.slope == pytest.approx(-a, rel=0.15)


def test_cusp_needs_nonzero_centre_value():
    basis = build_basis(L, 4)
    with pytest.raises(ValueError):
        cusp_estimate(np.zeros(basis.size), np.zeros(3), basis)


def test_smooth_step_shape():
    t = np.linspace(0, 1, 401)
    g = smooth_step(t)
    assert np.all(g[t <= 0.25] == 1) and np.all(g[t >= 0.5] == 0)
    assert np.all(np.diff(g) <= 0)
    assert smooth_step(0.375) == pytest.approx(0.5, abs=1e-12)
    assert smooth_step(0.3, sharpness=30.0) > smooth_step(0.3)


def test_surviving_parity_table():
    table = {(j, l): surviving_parity(j, l) for j in range(4) for l in range(2)}
    assert [k for k, v in table.items() if not v] == [(0, 0), (1, 1), (2, 0), (3, 1)]


def test_leading_coefficients():
    # Abel-regularized integrals of x^(j+2) j_l(x), extrapolated in the damping
    # parameter with mpmath
    frozen = {(0, 1): 2.0, (1, 0): -2.0, (2, 1): -8.0, (3, 0): 24.0}
    for (j, l), value in frozen.items():
        assert leading_coefficient(j, l) == pytest.approx(value, rel=1e-12)
    assert leading_coefficient(0, 0) == 0.0


def test_probe_small_wavenumber_limit():
    res = bessel_asymptotics_probe(1, 0, 1.0, [1e-4, 2e-4])
    assert res.values[0] == pytest.approx(res.integrand_scale, rel=1e-8)


def test_probe_first_order_survivor():
    res = bessel_asymptotics_probe(0, 1, 0.5, np.geomspace(400, 3200, 8))
    assert res.surviving
    assert res.fit.exponent == pytest.approx(-3, abs=0.05)
    assert res.fitted_prefactor == pytest.approx(2.0, rel=1e-3)


def test_probe_vanishing_case_decays_fast():
    ks = np.geomspace(100, 800, 8)
    res = bessel_asymptotics_probe(0, 0, 0.5, ks)
    assert not res.surviving and res.fit is None
    assert res.predicted_prefactor == 0.0
    tail = fit_slope(ks[:5], np.abs(res.values[:5])).exponent
    assert tail < -8
    assert res.scaled_tail < 1e-10


def test_probe_needs_two_wavenumbers():
    with pytest.raises(ValueError):
        bessel_asymptotics_probe(0, 0, 0.5, [100.0])
