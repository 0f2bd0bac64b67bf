"""Lowest eigenpairs of ``A x = lambda B x`` by locally optimal block PCG.

Each iteration performs a Rayleigh-Ritz step on the span of the current
block ``X``, the preconditioned residuals ``W`` and the previous search
directions ``P``. Gram matrices are assembled block by block so the
``[X, W, P]`` matrix is never formed. Converged bands are softly locked:
they stay in the Ritz basis but stop receiving new directions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

__all__ = ["SpectrumResult", "SolverError", "lowest_eigenpairs", "rayleigh_quotient",
           "kinetic_preconditioner", "operator_pair"]

log = logging.getLogger(__name__)

Matvec = Callable[[np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    """The ``B`` operator is not positive definite on the search space."""


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray = field(repr=False)
    residual_norms: np.ndarray
    iterations: int
    converged: bool
    matvecs: int = 0


def _h(X):
    return X.conj().T if np.iscomplexobj(X) else X.T


def _apply(op, X):
    if op is None:
        return X
    Y = op(X)
    return np.asarray(Y).reshape(X.shape)


def kinetic_preconditioner(kinetic: np.ndarray, shift: float = 1.0) -> Callable:
    """Diagonal ``(kinetic + shift)^-1`` scaling of residual blocks."""
    inv = 1.0 / (np.asarray(kinetic, dtype=float) + shift)

    def apply(R):
        return R * inv[:, None] if R.ndim == 2 else R * inv

    return apply


def operator_pair(op, method: str = "vpaw"):
    """``(A, B)`` matvecs of an assembled operator for the direct or transformed problem."""
    if method == "direct":
        return op.apply_H, None
    if method == "vpaw":
        return op.apply_Hvpaw, op.apply_Svpaw
    raise ValueError(f"unknown method {method!r}")


def rayleigh_quotient(A: Matvec, B: Matvec | None, x) -> float:
    x = np.asarray(x)
    if not np.any(x):
        raise ValueError("Rayleigh quotient of the zero vector")
    num = np.vdot(x, A(x))
    den = np.vdot(x, x if B is None else B(x))
    return float((num / den).real)


def _b_orthonormalize(V, BV, AV=None, what="block", label=""):
    """Make ``V`` B-orthonormal with a Cholesky factor of its Gram matrix."""
    gram = _h(V) @ BV
    gram = 0.5 * (gram + _h(gram))
    shared = BV is V
    try:
        chol = scipy.linalg.cholesky(gram, lower=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(
            f"Gram matrix of the {what} is not positive definite"
            + (f" for {label}" if label else "")
            + "; the overlap operator may have lost positive definiteness") from exc
    inv = scipy.linalg.solve_triangular(chol, np.eye(len(gram), dtype=chol.dtype), lower=False)
    V = V @ inv
    BV = V if shared else BV @ inv
    if AV is not None:
        AV = AV @ inv
    return V, BV, AV


def _dense_solve(A, B, n, n_bands, dtype):
    eye = np.eye(n, dtype=dtype)
    Am = _apply(A, eye)
    Bm = eye if B is None else _apply(B, eye)
    Am = 0.5 * (Am + _h(Am))
    Bm = 0.5 * (Bm + _h(Bm))
    vals, vecs = scipy.linalg.eigh(Am, Bm, subset_by_index=[0, n_bands - 1])
    return vals, vecs


def lowest_eigenpairs(A: Matvec, B: Matvec | None = None, n_bands: int = 1, *,
                      dim: int, dtype=np.complex128, tol: float = 1e-5,
                      max_iter: int = 200, seed: int = 0, x0: np.ndarray | None = None,
                      preconditioner: Callable | None = None, guard: int = 2,
                      label: str = "") -> SpectrumResult:
    """Lowest ``n_bands`` eigenpairs of the Hermitian pencil ``(A, B)``.

    ``A`` and ``B`` map ``(dim, k)`` blocks to blocks; ``B=None`` is the
    identity. Vectors are returned B-orthonormal with residual norms
    ``||A x - lambda B x||_2``. ``x0`` (``(dim,)`` or ``(dim, j)``) seeds
    the leading columns; the rest come from ``numpy.random.default_rng(seed)``.
    When ``max_iter`` is exhausted the best iterate is returned with
    ``converged=False``. :class:`SolverError` is raised when ``B`` is not
    positive definite on the iterates; ``label`` names the problem in that
    message.
    """
    if n_bands < 1:
        raise ValueError("n_bands must be at least 1")
    if n_bands > dim:
        raise ValueError("more bands requested than the problem dimension")
    block = min(dim, n_bands + guard)
    dtype = np.dtype(dtype)
    if dim <= max(64, 3 * block):
        vals, vecs = _dense_solve(A, B, dim, n_bands, dtype)
        BX = _apply(B, vecs)
        res = np.linalg.norm(_apply(A, vecs) - BX * vals, axis=0)
        return SpectrumResult(vals, vecs, res, 0, True, dim)

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((dim, block))
    if dtype.kind == "c":
        X = X + 1j * rng.standard_normal((dim, block))
    X = X.astype(dtype)
    if x0 is not None:
        start = np.asarray(x0, dtype=dtype).reshape(dim, -1)[:, :block]
        X[:, :start.shape[1]] = start
    precond = preconditioner or (lambda R: R)

    matvecs = 0
    BX = _apply(B, X)
    X, BX, _ = _b_orthonormalize(X, BX, what="initial block", label=label)
    AX = _apply(A, X)
    matvecs += block
    ritz, C = scipy.linalg.eigh(0.5 * (_h(X) @ AX + _h(AX) @ X))
    X, AX = X @ C, AX @ C
    BX = X if B is None else BX @ C

    P = AP = BP = None
    residual = np.full(block, np.inf)
    converged = False
    iteration = 0
    refreshed = False
    for iteration in range(1, max_iter + 1):
        R = AX - BX * ritz
        residual = np.linalg.norm(R, axis=0)
        if np.all(residual[:n_bands] < tol):
            if refreshed:
                converged = True
                break
            # implicit updates drift; confirm with fresh products before stopping
            BX = _apply(B, X)
            X, BX, _ = _b_orthonormalize(X, BX, what="iterate block", label=label)
            AX = _apply(A, X)
            matvecs += block
            ritz, C = scipy.linalg.eigh(0.5 * (_h(X) @ AX + _h(AX) @ X))
            X, AX = X @ C, AX @ C
            BX = X if B is None else BX @ C
            refreshed = True
            continue
        refreshed = False

        active = residual >= tol
        active[n_bands:] = True
        W = precond(R[:, active])
        W = W - X @ (_h(BX) @ W)
        BW = W if B is None else _apply(B, W)
        try:
            W, BW, _ = _b_orthonormalize(W, BW, what="residual block", label=label)
        except SolverError:
            # residuals collapsed numerically; restart directions
            W, BW = _qr_fallback(W, B)
        AW = _apply(A, W)
        matvecs += W.shape[1]

        blocks = [(X, AX, BX), (W, AW, BW)]
        if P is not None:
            try:
                Pn, BPn, APn = _b_orthonormalize(P, BP, AP, what="direction block", label=label)
                blocks.append((Pn, APn, BPn))
            except SolverError:
                P = None
        try:
            ritz_all, coef = _rayleigh_ritz(blocks)
        except np.linalg.LinAlgError:
            if len(blocks) == 3:
                blocks = blocks[:2]
                ritz_all, coef = _rayleigh_ritz(blocks)
            else:
                raise SolverError("Rayleigh-Ritz overlap is not positive definite"
                                  + (f" for {label}" if label else ""))
        coef = coef[:, :block]
        ritz = ritz_all[:block]

        sizes = [b[0].shape[1] for b in blocks]
        offsets = np.cumsum([0] + sizes)
        parts = [coef[offsets[i]:offsets[i + 1]] for i in range(len(blocks))]
        # with B the identity the B-images alias the blocks, halving peak memory
        Pd = sum(b[0] @ c for b, c in zip(blocks[1:], parts[1:]))
        APd = sum(b[1] @ c for b, c in zip(blocks[1:], parts[1:]))
        X = blocks[0][0] @ parts[0] + Pd
        AX = blocks[0][1] @ parts[0] + APd
        P, AP = Pd[:, active], APd[:, active]
        if B is None:
            BX, BP = X, P
        else:
            BPd = sum(b[2] @ c for b, c in zip(blocks[1:], parts[1:]))
            BX = blocks[0][2] @ parts[0] + BPd
            BP = BPd[:, active]
        del blocks, Pd, APd
    else:
        log.warning("eigensolver stopped after %d iterations (residual %.3e)",
                    max_iter, residual[:n_bands].max())

    return SpectrumResult(ritz[:n_bands].copy(), X[:, :n_bands].copy(),
                          residual[:n_bands].copy(), iteration, converged, matvecs)


def _qr_fallback(W, B):
    Q, _ = np.linalg.qr(W)
    BQ = _apply(B, Q)
    Q, BQ, _ = _b_orthonormalize(Q, BQ, what="residual block")
    return Q, BQ


def _rayleigh_ritz(blocks):
    """Generalized eigenproblem on the span of B-orthonormal blocks."""
    k = len(blocks)
    gram_a = [[None] * k for _ in range(k)]
    gram_b = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(i, k):
            a = _h(blocks[i][0]) @ blocks[j][1]
            b = _h(blocks[i][0]) @ blocks[j][2]
            gram_a[i][j], gram_b[i][j] = a, b
            if i != j:
                gram_a[j][i], gram_b[j][i] = _h(a), _h(b)
    GA = np.block(gram_a)
    GB = np.block(gram_b)
    GA = 0.5 * (GA + _h(GA))
    GB = 0.5 * (GB + _h(GB))
    if k > 2 and np.linalg.eigvalsh(GB)[0] < 1e-10:
        raise np.linalg.LinAlgError("search directions are nearly dependent")
    return scipy.linalg.eigh(GA, GB)
