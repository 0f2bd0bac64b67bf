import json
import math

import mpmath
import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy.integrate import quad

from conftest import dataset
from vpaw3d.atomic import (DatasetError, DatasetFormatError, ExpPolyRadial, PRESETS,
                           build_dataset, build_projectors, build_pseudo, dataset_from_atomics,
                           dumps_dataset, hydrogenoid, kato_recurrence_check, load_dataset,
                           loads_dataset, save_dataset, validate_dataset)

Z = 3.0
CHANNELS = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]


def test_lithium_1s_closed_form():
    u = hydrogenoid(1, 0, Z)
    assert float(u(0.0)) == pytest.approx(10.392304845413264, rel=1e-15)
    assert float(u.derivative(0.0, 1)) / float(u(0.0)) == pytest.approx(-3.0, rel=1e-14)
    r = np.linspace(0, 4, 9)
    assert np.allclose(u(r), 2 * Z**1.5 * np.exp(-Z * r), rtol=1e-14)


@pytest.mark.parametrize("n,l", CHANNELS)
def test_normalization(n, l):
    u = hydrogenoid(n, l, Z)
    norm, _ = quad(lambda r: (r**l * float(u(r))) ** 2 * r * r, 0, np.inf, limit=200)
    assert norm == pytest.approx(1.0, abs=1e-10)


def test_2s_energy_from_rayleigh_quotient():
    u = hydrogenoid(2, 0, Z)
    kinetic, _ = quad(lambda r: 0.5 * float(u.derivative(r, 1)) ** 2 * r * r, 0, np.inf, limit=200)
    well, _ = quad(lambda r: -Z * float(u(r)) ** 2 * r, 0, np.inf, limit=200)
    assert kinetic + well == pytest.approx(-1.125, abs=1e-10)
    assert u.epsilon == -1.125


@pytest.mark.parametrize("n,l", CHANNELS)
def test_eigen_residual_and_cusp(n, l):
    u = hydrogenoid(n, l, Z)
    r = np.linspace(1e-3, 5.0, 400)
    scale = np.max(np.abs(u(np.linspace(0, 5, 400))))
    assert np.max(np.abs(u.radial_operator(r) - u.epsilon * u(r))) < 1e-9 * scale
    cusp = float(u.derivative(0.0, 1)) + Z / (l + 1) * float(u(0.0))
    assert abs(cusp) < 1e-12 * abs(float(u(0.0)))


def test_hydrogenoid_arguments():
    for n, l in ((1, 1), (2, -1), (0, 0)):
        with pytest.raises(ValueError):
            hydrogenoid(n, l, Z)
    with pytest.raises(ValueError):
        hydrogenoid(1, 0, 0.0)


def test_taylor_recurrence():
    t1 = hydrogenoid(1, 0, Z).taylor(3)
    assert t1[1] == pytest.approx(-Z * t1[0], rel=1e-14)
    t2 = hydrogenoid(2, 0, Z).taylor(3)
    assert t2[2] / t2[0] == pytest.approx(3.375, rel=1e-13)
    for n, l in CHANNELS:
        assert kato_recurrence_check(hydrogenoid(n, l, Z), order=4) < 1e-10
    assert kato_recurrence_check(hydrogenoid(1, 0, Z)) < 1e-12


def test_recurrence_flags_a_non_eigenfunction():
    fake = ExpPolyRadial(3.0, Polynomial([1.0, 0.2]), 0, Z, 1, -4.5)
    assert kato_recurrence_check(fake) > 1e-3


# --- pseudization ----------------------------------------------------------


def test_constant_parent_gives_constant_pseudo():
    one = ExpPolyRadial(0.0, Polynomial([1.0]))
    p = build_pseudo(one, 0.4, 5)
    assert np.allclose(p.coeffs, [1, 0, 0, 0, 0], atol=1e-15)


def test_pseudo_against_monomial_solve():
    parent = ExpPolyRadial(1.0, Polynomial([1.0]))
    r_c = 0.7
    p = build_pseudo(parent, r_c, 3)
    # even quartic a + b r^2 + c r^4 matching value, slope and curvature
    rows = [[1, r_c**2, r_c**4], [0, 2 * r_c, 4 * r_c**3], [0, 2, 12 * r_c**2]]
    rhs = [math.exp(-r_c), -math.exp(-r_c), math.exp(-r_c)]
    a, b, c = np.linalg.solve(rows, rhs)
    r = np.linspace(0, r_c, 11)
    assert np.allclose(p.inner(r), a + b * r**2 + c * r**4, atol=1e-13)


@pytest.mark.parametrize("name,r_c", [("1s", 0.5), ("2s", 0.3), ("2s1p", 0.2)])
def test_pseudo_is_even_with_bounded_degree(name, r_c):
    for ch in dataset(name, r_c).channels:
        coef = ch.pseudo.poly_t.coef
        assert len(coef) <= 2 * ch.pseudo.d - 1
        assert np.all(np.abs(coef[1::2]) < 1e-12 * np.max(np.abs(coef)))
        for k in range(5):
            assert float(ch.pseudo.inner(r_c, k)) == pytest.approx(
                float(ch.atomic.derivative(r_c, k)), rel=1e-10, abs=1e-10)


def _mp_inner(pseudo):
    coef = [mpmath.mpf(float(c)) for c in pseudo.poly_t.coef]
    r_c = mpmath.mpf(pseudo.r_c)
    return lambda r: mpmath.polyval(coef[::-1], r / r_c)


def _mp_outer(u):
    coef = [mpmath.mpf(float(c)) for c in u.poly.coef]
    a = mpmath.mpf(u.decay)
    return lambda r: mpmath.exp(-a * r) * mpmath.polyval(coef[::-1], r)


def one_sided_gaps(channel, d):
    """Relative gaps between inside and outside one-sided derivatives at r_c."""
    with mpmath.workdps(60):
        r_c = mpmath.mpf(channel.pseudo.r_c)
        inner, outer = _mp_inner(channel.pseudo), _mp_outer(channel.atomic)
        gaps = []
        for k in range(d + 1):
            left = mpmath.diff(inner, r_c, k, direction=-1, h=mpmath.mpf("1e-12"))
            right = mpmath.diff(outer, r_c, k, direction=1, h=mpmath.mpf("1e-12"))
            gaps.append(float(abs(left - right) / max(abs(right), mpmath.mpf(1))))
    return gaps


@pytest.mark.parametrize("name,r_c", [("1s", 0.5), ("2s1p", 0.3)])
def test_derivatives_match_below_order_d_and_jump_at_d(name, r_c):
    for ch in dataset(name, r_c).channels:
        gaps = one_sided_gaps(ch, 5)
        assert max(gaps[:5]) < 1e-6
        assert gaps[5] > 1e-3


def test_pseudo_arguments():
    u = hydrogenoid(1, 0, Z)
    with pytest.raises(ValueError):
        build_pseudo(u, 0.0, 5)
    with pytest.raises(ValueError):
        build_pseudo(u, 0.5, 0)


# --- projectors ------------------------------------------------------------


def test_single_projector_formula():
    ds = dataset("1s", 0.5)
    ch = ds.channels[0]
    chi = ch.projector_set.chi
    gram, _ = quad(lambda r: float(chi(r) * ch.pseudo.inner(r) ** 2) * r * r, 0, 0.5,
                   epsabs=1e-15, epsrel=1e-13, limit=200)
    r = np.linspace(0.01, 0.49, 13)
    assert np.allclose(ch.projector(r), chi(r) * ch.pseudo.inner(r) / gram, rtol=1e-10)


@pytest.mark.parametrize("r_c", [0.2, 0.3, 0.5])
@pytest.mark.parametrize("name", sorted(PRESETS))
def test_duality(name, r_c):
    report = validate_dataset(dataset(name, r_c))
    assert report.ok, report.lines()
    assert report.duality_residual < 1e-10


def test_projectors_do_not_depend_on_cutoff_scale():
    atomics = [hydrogenoid(1, 0, Z), hydrogenoid(2, 0, Z)]
    plain = dataset_from_atomics(Z, 0.5, 5, atomics)
    scaled = dataset_from_atomics(Z, 0.5, 5, atomics, chi_scale=10.0)
    r = np.linspace(0.0, 0.5, 21)
    for a, b in zip(plain.channels, scaled.channels):
        pa, pb = a.projector(r), b.projector(r)
        assert np.max(np.abs(pa - pb)) < 1e-12 * np.max(np.abs(pa))


def test_projectors_vanish_outside_the_ball():
    for ch in dataset("2s1p", 0.3).channels:
        assert np.all(ch.projector(np.array([0.3, 0.31, 1.0, 4.0])) == 0)
        assert np.all(ch.difference(np.array([0.3, 0.5])) == 0)


def test_counts():
    assert [dataset(n).n_paw for n in ("1s", "2s", "2s1p")] == [1, 2, 5]
    assert dataset("2s1p").counts == (2, 1)


def test_mixed_channels_rejected():
    p = [build_pseudo(hydrogenoid(1, 0, Z), 0.5, 5), build_pseudo(hydrogenoid(2, 1, Z), 0.5, 5)]
    with pytest.raises(ValueError):
        build_projectors(p)


# --- validation ------------------------------------------------------------


def test_duplicated_channel_is_reported():
    with pytest.raises(DatasetError):
        build_dataset(Z, 0.5, 5, ((1, 0), (1, 0)))
    ds = build_dataset(Z, 0.5, 5, ((1, 0), (1, 0)), strict=False)
    report = validate_dataset(ds)
    assert not report.ok
    assert "not independent" in report.lines()[-1]


def test_channel_vanishing_at_nucleus_is_reported():
    odd = ExpPolyRadial(1.5, Polynomial([0.0, 1.0]), 0, Z, 2, -1.125)
    report = validate_dataset(dataset_from_atomics(Z, 0.5, 5, [odd]))
    assert not report.ok
    assert report.min_origin_value == 0


# --- file format -----------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    ds = dataset("2s1p", 0.3)
    path = save_dataset(ds, tmp_path / "ds.json")
    back = load_dataset(path)
    assert dumps_dataset(back) == path.read_text()
    a, b = validate_dataset(ds), validate_dataset(back)
    assert a.duality_residual == b.duality_residual
    assert a.overlap_condition == b.overlap_condition


def test_corrupted_files_are_rejected():
    text = dumps_dataset(dataset("2s"))
    with pytest.raises(DatasetFormatError):
        loads_dataset(text[: len(text) // 2])
    doc = json.loads(text)
    doc["channels"][0]["pseudo_coeffs"][0] *= 1.0000001
    with pytest.raises(DatasetFormatError, match="checksum"):
        loads_dataset(json.dumps(doc))
    doc = json.loads(text)
    doc["format_version"] = 99
    with pytest.raises(DatasetFormatError):
        loads_dataset(json.dumps(doc))
