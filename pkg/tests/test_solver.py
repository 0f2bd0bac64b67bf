import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from conftest import dataset
from vpaw3d.potential import NuclearConfiguration
from vpaw3d.pwbasis import UnitCell, build_basis
from vpaw3d.solver import (SolverError, kinetic_preconditioner, lowest_eigenpairs,
                           operator_pair, rayleigh_quotient)
from vpaw3d.vpaw import assemble

L = 5.0


def _pair(mat_a, mat_b=None):
    return (lambda X: mat_a @ X), (None if mat_b is None else (lambda X: mat_b @ X))


def _random_pencil(rng, n, complex_=False):
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, n))
    if complex_:
        A = A + 1j * rng.standard_normal((n, n))
        B = B + 1j * rng.standard_normal((n, n))
    A = A + A.conj().T + np.diag(np.arange(n, dtype=float))
    B = B @ B.conj().T / n + np.eye(n)
    return A, B


def test_free_particle_levels():
    empty = NuclearConfiguration(UnitCell(L), np.zeros(0), np.zeros((0, 3)))
    op = assemble(build_basis(L, 4), empty, representation="real")
    res = lowest_eigenpairs(op.apply_H, dim=op.dim, dtype=float, n_bands=7, tol=1e-8,
                            preconditioner=kinetic_preconditioner(op.kinetic))
    assert res.converged
    assert res.eigenvalues[0] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(res.eigenvalues[1:], 0.5 * (2 * np.pi / L) ** 2, atol=1e-10)
    assert 0.5 * (2 * np.pi / L) ** 2 == pytest.approx(0.78956835, rel=1e-8)


@pytest.mark.parametrize("complex_", [False, True])
def test_generalized_pencil_against_dense(rng, complex_):
    A, B = _random_pencil(rng, 150, complex_)
    dtype = complex if complex_ else float
    res = lowest_eigenpairs(*_pair(A, B), dim=150, n_bands=3, dtype=dtype, tol=1e-9, max_iter=500)
    ref = scipy.linalg.eigh(A, B, eigvals_only=True)[:3]
    assert res.converged
    assert np.allclose(res.eigenvalues, ref, atol=1e-9)
    X = res.vectors
    assert np.allclose(X.conj().T @ B @ X, np.eye(3), atol=1e-10)
    resid = np.linalg.norm(A @ X - B @ X * res.eigenvalues, axis=0)
    assert np.all(resid < 1e-9)
    assert np.allclose(resid, res.residual_norms, atol=1e-10)


def test_vpaw_pencil_at_small_cutoff(lithium_dimer):
    op = assemble(build_basis(L, 4), lithium_dimer, dataset("1s"))
    A, B = operator_pair(op, "vpaw")
    res = lowest_eigenpairs(A, B, dim=op.dim, tol=1e-8, max_iter=500,
                            preconditioner=kinetic_preconditioner(op.kinetic))
    eye = np.eye(op.dim)
    ref = scipy.linalg.eigh(A(eye), B(eye), eigvals_only=True, subset_by_index=[0, 0])
    assert res.eigenvalues[0] == pytest.approx(ref[0], abs=1e-9)


def test_results_do_not_depend_on_the_seed(lithium_dimer):
    op = assemble(build_basis(L, 6), lithium_dimer, dataset("1s"), representation="real")
    energies = [lowest_eigenpairs(op.apply_Hvpaw, op.apply_Svpaw, dim=op.dim, dtype=float,
                                  tol=1e-7, seed=s, max_iter=400,
                                  preconditioner=kinetic_preconditioner(op.kinetic)).eigenvalues[0]
                for s in (0, 1, 2)]
    assert max(energies) - min(energies) < 1e-8


def test_direct_energies_decrease_with_cutoff(lithium_dimer):
    energies = []
    for M in (9, 12, 15, 20):
        op = assemble(build_basis(L, M), lithium_dimer, representation="real")
        energies.append(lowest_eigenpairs(op.apply_H, dim=op.dim, dtype=float, tol=1e-6,
                                          max_iter=400,
                                          preconditioner=kinetic_preconditioner(op.kinetic)
                                          ).eigenvalues[0])
    assert np.all(np.diff(energies) < 0)


def test_iteration_budget_exhaustion(rng):
    A, B = _random_pencil(rng, 200)
    res = lowest_eigenpairs(*_pair(A, B), dim=200, dtype=float, tol=1e-14, max_iter=2)
    assert not res.converged and res.iterations == 2
    assert np.isfinite(res.eigenvalues[0])


def test_indefinite_overlap_is_reported(rng):
    A, _ = _random_pencil(rng, 120)
    B = np.diag(np.r_[np.ones(60), -np.ones(60)])
    with pytest.raises(SolverError, match="toy problem"):
        lowest_eigenpairs(*_pair(A, B), dim=120, dtype=float, max_iter=20, label="toy problem")


def test_small_problems_use_dense_path(rng):
    A, B = _random_pencil(rng, 20)
    res = lowest_eigenpairs(*_pair(A, B), dim=20, dtype=float, n_bands=2)
    assert res.iterations == 0
    assert np.allclose(res.eigenvalues, scipy.linalg.eigh(A, B, eigvals_only=True)[:2])


def test_argument_checks(rng):
    A, B = _random_pencil(rng, 10)
    with pytest.raises(ValueError):
        lowest_eigenpairs(*_pair(A, B), dim=10, n_bands=0)
    with pytest.raises(ValueError):
        lowest_eigenpairs(*_pair(A, B), dim=10, n_bands=11)
    with pytest.raises(ValueError):
        operator_pair(None, "other")
    with pytest.raises(ValueError):
        rayleigh_quotient(*_pair(A, B), np.zeros(10))


@given(st.integers(0, 2**32 - 1))
def test_rayleigh_quotient_bounds(seed):
    rng = np.random.default_rng(seed)
    A, B = _random_pencil(rng, 12)
    vals = scipy.linalg.eigh(A, B, eigvals_only=True)
    x = rng.standard_normal(12)
    q = rayleigh_quotient(*_pair(A, B), x)
    assert vals[0] - 1e-10 <= q <= vals[-1] + 1e-10
    assert rayleigh_quotient(*_pair(A, B), 3.0 * x) == pytest.approx(q, rel=1e-12)
