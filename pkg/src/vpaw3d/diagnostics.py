"""Cusp measurements, power-law fits and a probe of oscillatory radial integrals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gamma

from .kernels import sph_bessel
from .pwbasis import PlaneWaveBasis
from .specialfn import QuadratureError, gauss_legendre

__all__ = [
    "SlopeFit",
    "fit_slope",
    "spherical_average",
    "CuspEstimate",
    "cusp_estimate",
    "exponential_coefficients",
    "gaussian_coefficients",
    "smooth_step",
    "ProbeResult",
    "bessel_asymptotics_probe",
    "surviving_parity",
    "leading_coefficient",
]


# ---------------------------------------------------------------------------
# power laws


@dataclass
class SlopeFit:
    window: list[float]
    exponent: float
    intercept: float
    residual: float

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.exponent


def fit_slope(xs: Sequence[float], ys: Sequence[float],
              window: Iterable[float] | None = None) -> SlopeFit:
    """Least-squares fit of ``log y = intercept + exponent * log x``.

    ``window`` restricts the fit to the listed ``x`` values. At least three
    points are required and all of them must be positive.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys differ in length")
    if window is not None:
        wanted = np.asarray(list(window), dtype=float)
        keep = np.array([np.any(np.isclose(x, wanted, rtol=1e-12, atol=0)) for x in xs])
        xs, ys = xs[keep], ys[keep]
    if len(xs) < 3:
        raise ValueError("a slope fit needs at least three points")
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise ValueError("slope fits need positive, finite data")
    lx, ly = np.log(xs), np.log(ys)
    design = np.stack([np.ones_like(lx), lx], axis=1)
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - ly) ** 2)))
    return SlopeFit(xs.tolist(), float(coef[1]), float(coef[0]), resid)


# ---------------------------------------------------------------------------
# cusp


def _shell_sums(coeffs, center, basis):
    k2 = np.sum(basis.k_int.astype(np.int64) ** 2, axis=1)
    uniq, inv = np.unique(k2, return_inverse=True)
    weighted = np.asarray(coeffs) * np.exp(1j * (basis.kvectors @ np.asarray(center, dtype=float)))
    sums = (np.bincount(inv, weights=weighted.real, minlength=len(uniq))
            + 1j * np.bincount(inv, weights=weighted.imag, minlength=len(uniq)))
    return (2 * np.pi / basis.L) * np.sqrt(uniq), sums


def spherical_average(coeffs, center, radii, basis: PlaneWaveBasis) -> np.ndarray:
    """Average of the field over spheres of the given radii about ``center``.

    ``|cell|^{-1/2} sum_K c_K exp(iK.center) j_0(|K| r)``; returns the real
    part (the imaginary part vanishes for real fields).
    """
    c = basis._check_coeffs(coeffs)
    knorm, sums = _shell_sums(c, center, basis)
    r = np.atleast_1d(np.asarray(radii, dtype=float))
    kernel = sph_bessel(0, np.multiply.outer(r, knorm))
    out = (kernel @ sums) / math.sqrt(basis.cell.volume)
    return out.real.reshape(np.shape(radii))


@dataclass
class CuspEstimate:
    slope: float
    value_at_center: float
    window: tuple[float, float]
    tail_exponent: float = float("nan")
    tail_values: np.ndarray = field(default=None, repr=False)


def cusp_estimate(coeffs, center, basis: PlaneWaveBasis, samples: int = 13,
                  template_decay: float = 3.0) -> CuspEstimate:
    """Normalized radial slope of the spherical average at ``center``.

    Truncation rounds a cusp off over a few grid spacings, so a plain
    polynomial fit underestimates it. Instead the spherical average on
    ``[0, 3h]`` (``h = pi / (2 K_max)``) is fitted by ``a + b T(r) + c r^2``
    where ``T = (1 - exp(-template_decay r)) / template_decay`` is truncated
    to the same basis: ``T`` has unit slope at the origin and carries the same
    smoothing as a genuine cusp. The slope is ``b / a``.

    A secondary indicator is the log-log trend of ``mean |c_K| K^4`` over the
    top third of the shells; it tends to 0 when coefficients decay like ``K^-4``.
    """
    c = basis._check_coeffs(coeffs)
    k_max = 2 * np.pi * basis.M / basis.L
    h = np.pi / (2 * k_max)
    radii = np.linspace(0.0, 3 * h, samples)
    profile = spherical_average(c, center, radii, basis)
    at_zero = profile[0]
    if abs(at_zero) < 1e-10:
        raise ValueError("spherical average vanishes at the centre; slope cannot be normalized")
    bump = exponential_coefficients(template_decay, center, basis)
    template = (1.0 - spherical_average(bump, center, radii, basis)) / template_decay
    design = np.stack([np.ones_like(radii), template, radii**2], axis=1)
    coef, *_ = np.linalg.lstsq(design, profile, rcond=None)

    knorm = basis.k_norm
    shells = np.rint(knorm / (2 * np.pi / basis.L)).astype(int)
    counts = np.bincount(shells)
    mags = np.bincount(shells, weights=np.abs(c)) / np.maximum(counts, 1)
    valid = np.nonzero((counts > 0) & (np.arange(len(counts)) > 0))[0]
    valid = valid[valid <= basis.M]
    top = valid[len(valid) - max(3, len(valid) // 3):]
    tail = np.nan
    tail_vals = None
    if len(top) >= 3 and np.all(mags[top] > 0):
        kk = top * (2 * np.pi / basis.L)
        tail_vals = mags[top] * kk**4
        tail = fit_slope(kk, tail_vals).exponent
    return CuspEstimate(float(coef[1] / coef[0]), float(at_zero), (0.0, 3 * h), tail, tail_vals)


def exponential_coefficients(a: float, center, basis: PlaneWaveBasis) -> np.ndarray:
    """Plane-wave coefficients of the periodized ``exp(-a |r - center|)``.

    Uses the closed-form transform ``8 pi a / (a^2 + K^2)^2``.
    """
    k2 = basis.k_norm**2
    phase = np.exp(-1j * (basis.kvectors @ np.asarray(center, dtype=float)))
    return phase * 8 * np.pi * a / (a * a + k2) ** 2 / math.sqrt(basis.cell.volume)


def gaussian_coefficients(width: float, center, basis: PlaneWaveBasis) -> np.ndarray:
    """Coefficients of the periodized ``exp(-|r - center|^2 / (2 width^2))``."""
    k2 = basis.k_norm**2
    phase = np.exp(-1j * (basis.kvectors @ np.asarray(center, dtype=float)))
    norm = (2 * np.pi * width**2) ** 1.5
    return phase * norm * np.exp(-0.5 * width**2 * k2) / math.sqrt(basis.cell.volume)


# ---------------------------------------------------------------------------
# oscillatory integral probe


def _bump(s, sharpness):
    inside = np.abs(s) < 1.0
    safe = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(-sharpness / (1.0 - safe * safe)), 0.0)


def smooth_step(t, sharpness: float = 12.0, nodes: int = 200):
    """C-infinity profile: 1 on ``[0, 1/4]``, 0 from ``1/2`` on.

    On ``[1/4, 1/2]`` the profile is one minus the normalized running integral
    of the bump ``exp(-sharpness / (1 - y^2))``, with ``y`` mapping the
    transition onto ``[-1, 1]``. Larger ``sharpness`` concentrates the bump,
    trading the initial Fourier roll-off for a faster asymptotic one.
    """
    t = np.asarray(t, dtype=float)
    y = np.clip(8.0 * t - 3.0, -1.0, 1.0)
    x, w = gauss_legendre(nodes, 0.0, 1.0)
    total = 2.0 * np.dot(_bump(2.0 * x - 1.0, sharpness), w)
    span = y + 1.0
    partial = _bump(-1.0 + np.multiply.outer(span, x), sharpness) @ w * span
    return np.clip(1.0 - partial / total, 0.0, 1.0)


def surviving_parity(j: int, l: int) -> bool:
    """Whether the leading ``K^-(j+3)`` term has a nonzero coefficient.

    The coefficient is proportional to ``1 / Gamma((l - j)/2)``, which
    vanishes exactly when ``j - l`` is a non-negative even integer.
    """
    return not (j >= l and (j - l) % 2 == 0)


def leading_coefficient(j: int, l: int) -> float:
    """``int_0^inf x^(j+2) j_l(x) dx`` in the Abel sense (zero when it vanishes)."""
    if not surviving_parity(j, l):
        return 0.0
    mu = j + 3
    return float(math.sqrt(math.pi) * 2.0 ** (mu - 2) * gamma((l + mu) / 2) / gamma((3 + l - mu) / 2))


@dataclass
class ProbeResult:
    j: int
    l: int
    r_c: float
    k: np.ndarray
    values: np.ndarray
    surviving: bool
    fit: SlopeFit | None
    decay_ratio: float
    integrand_scale: float
    scaled_tail: float
    predicted_prefactor: float
    fitted_prefactor: float


def _probe_weights(j, r_c, sharpness, nodes):
    r, w = gauss_legendre(nodes, 0.0, 0.5 * r_c)
    return r, smooth_step(r / r_c, sharpness) * r ** (j + 2) * w


def bessel_asymptotics_probe(j: int, l: int, r_c: float, ks: Sequence[float],
                             sharpness: float = 12.0, rtol: float = 1e-10) -> ProbeResult:
    """Integrals ``a(K) = int_0^{r_c/2} w(r) r^(j+2) j_l(K r) dr`` and their decay.

    ``w = smooth_step(r / r_c)``. For the surviving parity the log-log slope
    over ``ks`` is fitted (expected ``-(j+3)``). For the vanishing parity two
    tail measures are reported: ``decay_ratio = |a(K_max)| / |a(K_min)|`` and
    ``scaled_tail = |a(K_max)| / int w r^(j+2) dr``.

    Each value is recomputed with twice the nodes; a change above
    ``rtol |a| + 1e-13 * integrand_scale`` raises :class:`QuadratureError`.
    """
    k = np.sort(np.asarray(ks, dtype=float))
    if len(k) < 2:
        raise ValueError("the probe needs at least two wavenumbers")
    nodes = max(128, 8 * int(math.ceil(k[-1] * r_c / 2)))
    r, wt = _probe_weights(j, r_c, sharpness, nodes)
    coarse = sph_bessel(l, np.multiply.outer(k, r)) @ wt
    r, wt = _probe_weights(j, r_c, sharpness, 2 * nodes)
    values = sph_bessel(l, np.multiply.outer(k, r)) @ wt
    scale = float(wt.sum())
    if np.any(np.abs(values - coarse) > rtol * np.abs(values) + 1e-13 * scale):
        raise QuadratureError(f"probe integral for (j={j}, l={l}) not converged")
    surviving = surviving_parity(j, l)
    ratio = float(abs(values[-1]) / abs(values[0])) if values[0] != 0 else float("inf")
    fit = None
    fitted_pref = float("nan")
    if surviving and len(k) >= 3:
        fit = fit_slope(k, np.abs(values))
        fitted_pref = float(np.median(values * k ** (j + 3)))
    return ProbeResult(j, l, r_c, k, values, surviving, fit, ratio, scale,
                       float(abs(values[-1]) / scale), leading_coefficient(j, l), fitted_pref)
