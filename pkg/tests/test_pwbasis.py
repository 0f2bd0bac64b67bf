import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vpaw3d.pwbasis import (UnitCell, build_basis, complex_to_real, from_grid, from_real_grid,
                            real_to_complex, to_grid, to_real_grid, transfer_coefficients)


def _is_5_smooth(n):
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


def _random_coeffs(basis, rng, batch=()):
    shape = (basis.size,) + batch
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_cell_volume_and_validation():
    assert UnitCell(5.0).volume == 125.0
    for bad in (0.0, -1.0, math.inf):
        with pytest.raises(ValueError):
            UnitCell(bad)


def test_smallest_basis_has_27_modes():
    b = build_basis(5.0, 1)
    assert b.size == 27
    steps = np.unique(np.round(np.diff(np.unique(b.kvectors[:, 0])), 14))
    assert np.allclose(steps, 2 * np.pi / 5)


def test_zero_cutoff_is_the_constant_mode():
    b = build_basis(5.0, 0)
    assert b.size == 1
    assert np.all(b.kvectors == 0)


def test_cutoff_ten_dimension_and_grid():
    b = build_basis(5.0, 10)
    assert b.size == 9261
    assert b.N >= 41


@pytest.mark.parametrize("M, oversample", [(1, 1), (3, 1), (7, 1.5), (10, 2), (13, 1)])
def test_grid_is_smallest_5_smooth_size(M, oversample):
    b = build_basis(5.0, M, oversample)
    bound = math.ceil(oversample * (4 * M + 1))
    assert b.N >= bound and _is_5_smooth(b.N)
    assert not any(_is_5_smooth(n) for n in range(bound, b.N))


@pytest.mark.parametrize("L, M", [(0.0, 2), (-5.0, 2), (5.0, -1), (5.0, 1.5)])
def test_invalid_arguments_rejected(L, M):
    with pytest.raises(ValueError):
        build_basis(L, M)


@given(st.integers(0, 6), st.data())
def test_index_round_trip(M, data):
    b = build_basis(5.0, M)
    i = data.draw(st.integers(0, b.size - 1))
    assert b.index_of(b.k_int[i]) == i


def test_index_outside_cutoff():
    with pytest.raises(IndexError):
        build_basis(5.0, 2).index_of([3, 0, 0])


def test_constant_mode_synthesizes_constant_field():
    b = build_basis(5.0, 2)
    c = np.zeros(b.size, complex)
    c[b.index_of([0, 0, 0])] = 1.0
    assert np.allclose(to_grid(c, b), 1 / math.sqrt(125.0), atol=1e-15)
    assert not np.any(to_grid(np.zeros(b.size), b))


def test_round_trip_of_random_coefficients(rng):
    b = build_basis(5.0, 4)
    c = _random_coeffs(b, rng)
    back = from_grid(to_grid(c, b), b)
    assert np.linalg.norm(back - c) < 1e-13 * np.linalg.norm(c)


def test_batched_transforms_match_columns(rng):
    b = build_basis(5.0, 3)
    c = _random_coeffs(b, rng, (3,))
    grids = to_grid(c, b)
    for j in range(3):
        assert np.allclose(grids[..., j], to_grid(c[:, j], b), atol=1e-14)
    assert np.allclose(from_grid(grids, b), c, atol=1e-13)


def test_constant_and_single_mode_fields():
    b = build_basis(5.0, 3)
    coeffs = from_grid(np.full((b.N,) * 3, 2.0), b)
    expect = np.zeros(b.size)
    expect[b.index_of([0, 0, 0])] = 2.0 * math.sqrt(125.0)
    assert np.allclose(coeffs, expect, atol=1e-12)

    k0 = np.array([2, -1, 3])
    r = b.grid_points()
    mode = np.exp(1j * r @ (2 * np.pi / 5 * k0))
    delta = from_grid(mode, b)
    i = b.index_of(k0)
    assert abs(delta[i] - math.sqrt(125.0)) < 1e-11
    delta[i] = 0
    assert np.max(np.abs(delta)) < 1e-11


def test_projection_of_field_above_cutoff_matches_direct_sum():
    b = build_basis(5.0, 2)
    assert b.N == 9
    r = b.grid_points()
    kv = 2 * np.pi / 5
    field = (np.cos(kv * (3 * r[..., 0] + r[..., 1])) + 0.3 * np.sin(kv * 4 * r[..., 2])
             + np.exp(np.sin(kv * r[..., 0])))
    got = from_grid(field, b)
    pts = r.reshape(-1, 3)
    vals = field.reshape(-1)
    h3 = (5.0 / b.N) ** 3
    direct = np.array([h3 / math.sqrt(125.0) * np.sum(vals * np.exp(-1j * pts @ K))
                       for K in b.kvectors])
    assert np.max(np.abs(got - direct)) < 1e-12


def test_parseval_for_band_limited_fields(rng):
    b = build_basis(5.0, 3)
    c = _random_coeffs(b, rng)
    f = to_grid(c, b)
    quad = np.sum(np.abs(f) ** 2) * (5.0 / b.N) ** 3
    assert abs(quad - np.sum(np.abs(c) ** 2)) < 1e-12 * quad


def test_inner_products_preserved(rng):
    b = build_basis(5.0, 3)
    x, y = _random_coeffs(b, rng), _random_coeffs(b, rng)
    grid_ip = np.vdot(to_grid(x, b), to_grid(y, b)) * (5.0 / b.N) ** 3
    assert abs(grid_ip - np.vdot(x, y)) < 1e-12 * np.linalg.norm(x) * np.linalg.norm(y)


def test_real_field_has_conjugate_symmetric_coefficients(rng):
    b = build_basis(5.0, 3)
    f = rng.standard_normal((b.N,) * 3)
    c = from_grid(f, b)
    assert np.allclose(c[::-1], np.conj(c), atol=1e-13)


def test_real_coordinates_are_an_isometry(rng):
    b = build_basis(5.0, 3)
    a = rng.standard_normal(b.size)
    c = real_to_complex(a)
    assert abs(np.linalg.norm(c) - np.linalg.norm(a)) < 1e-13
    assert np.allclose(c[::-1], np.conj(c))
    assert np.allclose(complex_to_real(c), a, atol=1e-14)


def test_real_grid_path_matches_complex_path(rng):
    b = build_basis(5.0, 4)
    a = rng.standard_normal(b.size)
    f_real = to_real_grid(a, b)
    f_cplx = to_grid(real_to_complex(a), b)
    assert np.max(np.abs(f_cplx.imag)) < 1e-13
    assert np.allclose(f_real, f_cplx.real, atol=1e-13)
    g = rng.standard_normal((b.N,) * 3)
    assert np.allclose(real_to_complex(from_real_grid(g, b)), from_grid(g, b), atol=1e-12)


def test_dimension_mismatch_rejected():
    b = build_basis(5.0, 2)
    with pytest.raises(ValueError):
        to_grid(np.zeros(10), b)
    with pytest.raises(ValueError):
        from_grid(np.zeros((4, 4, 4)), b)


@pytest.mark.parametrize("real", [False, True])
def test_transfer_pads_and_truncates(rng, real):
    small, large = build_basis(5.0, 2), build_basis(5.0, 4)
    x = rng.standard_normal(small.size) if real else _random_coeffs(small, rng)
    up = transfer_coefficients(x, small, large, real=real)
    assert abs(np.linalg.norm(up) - np.linalg.norm(x)) < 1e-12
    assert np.allclose(transfer_coefficients(up, large, small, real=real), x, atol=1e-13)
    if not real:
        i = small.index_of([1, -2, 0])
        assert up[large.index_of([1, -2, 0])] == x[i]


def test_transfer_requires_same_cell():
    with pytest.raises(ValueError):
        transfer_coefficients(np.zeros(27), build_basis(5.0, 1), build_basis(4.0, 1))


def test_custom_grid_size_is_respected(rng):
    b = dataclasses.replace(build_basis(5.0, 3), N=25)
    c = _random_coeffs(b, rng)
    assert to_grid(c, b).shape == (25, 25, 25)
    assert np.allclose(from_grid(to_grid(c, b), b), c, atol=1e-13)
