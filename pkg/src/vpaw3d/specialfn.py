"""Spherical Bessel functions, real spherical harmonics and radial transforms.

The radial transform ``int_0^rmax f(r) j_l(K r) r^2 dr`` is what turns a
ball-localized ``f(r) Y_lm`` into plane-wave coefficients. It is evaluated
by Gauss-Legendre quadrature whose node count grows with ``K * rmax`` and is
checked by re-running with twice the nodes.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_legendre

from .kernels import sph_bessel

__all__ = [
    "QuadratureError",
    "gauss_legendre",
    "sph_bessel",
    "real_sph_harm",
    "bessel_transform",
    "bessel_transform_table",
    "transform_node_count",
]

MAX_SHIPPED_L = 1
_Y00 = 0.5 / np.sqrt(np.pi)
_Y1 = np.sqrt(3.0 / (4.0 * np.pi))


class QuadratureError(RuntimeError):
    """Raised when a quadrature fails its node-doubling convergence test."""


@lru_cache(maxsize=64)
def _legendre_reference(n: int):
    x, w = roots_legendre(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0):
    """Nodes and weights of the ``n``-point Gauss-Legendre rule on ``[a, b]``."""
    if n < 1:
        raise ValueError("node count must be positive")
    x, w = _legendre_reference(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def real_sph_harm(l: int, m: int, vectors) -> np.ndarray:
    """Real spherical harmonic ``Y_lm`` in the direction of each vector.

    Vectors need not be normalized. For ``l >= 1`` the zero vector maps to 0.
    The ``l = 1`` functions are ``sqrt(3/4pi) * (y, z, x)/r`` for
    ``m = -1, 0, 1``.
    """
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid (l, m) = ({l}, {m})")
    if l > MAX_SHIPPED_L:
        raise NotImplementedError(f"real harmonics are provided for l <= {MAX_SHIPPED_L}")
    v = np.asarray(vectors, dtype=float)
    if v.shape[-1] != 3:
        raise ValueError("vectors must have a trailing axis of length 3")
    if l == 0:
        return np.full(v.shape[:-1], _Y00)
    r = np.linalg.norm(v, axis=-1)
    component = v[..., (1, 2, 0)[m + 1]]
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = _Y1 * component[nz] / r[nz]
    return out


def transform_node_count(k_max: float, r_max: float) -> int:
    return max(64, 8 * int(np.ceil(k_max * r_max)))


def bessel_transform_table(f: Callable, l: int, ks, r_max: float, *,
                           nodes: int | None = None, min_nodes: int = 0, check: bool = True,
                           rtol: float = 1e-11) -> np.ndarray:
    """``int_0^r_max f(r) j_l(k r) r^2 dr`` for every ``k`` in ``ks``.

    One rule, sized for the largest ``k`` (and at least ``min_nodes``), is
    shared by all wavenumbers. With
    ``check`` the result is recomputed with twice the nodes and
    :class:`QuadratureError` is raised if any entry moves by more than
    ``rtol * (1 + |value|)``.

    ``f`` is vectorized over radii and may return an array of shape
    ``(n_nodes,)`` or ``(n_funcs, n_nodes)``; the output then has shape
    ``ks.shape`` or ``(n_funcs,) + ks.shape``.
    """
    ks = np.asarray(ks, dtype=float)
    flat = ks.ravel()
    if flat.size == 0:
        return np.zeros(ks.shape)
    k_top = float(np.max(np.abs(flat)))
    n = nodes or max(min_nodes, transform_node_count(k_top, r_max))

    def run(count):
        r, w = gauss_legendre(count, 0.0, r_max)
        fv = np.asarray(f(r), dtype=float)
        kernel = sph_bessel(l, np.multiply.outer(np.abs(flat), r))
        return fv.ndim == 1, (np.atleast_2d(fv) * (w * r**2)) @ kernel.T

    single, value = run(n)
    if check:
        _, fine = run(2 * n)
        gap = np.abs(fine - value)
        bound = rtol * (1.0 + np.abs(fine))
        if np.any(gap > bound):
            worst = np.unravel_index(np.argmax(gap / bound), gap.shape)
            raise QuadratureError(
                f"radial transform not converged with {n} nodes "
                f"(l={l}, k={flat[worst[-1]]:.6g}, r_max={r_max:.6g}, "
                f"change {gap[worst]:.3e})")
        value = fine
    if single:
        return value[0].reshape(ks.shape)
    return value.reshape((value.shape[0],) + ks.shape)


def bessel_transform(f: Callable, l: int, k: float, r_max: float, **kwargs) -> float:
    """Scalar form of :func:`bessel_transform_table`."""
    return float(bessel_transform_table(f, l, np.array([k]), r_max, **kwargs)[0])
