"""Periodic Coulomb potential of point nuclei in a neutralizing background.

Near each nucleus the potential behaves like ``-Z/|r - R|`` plus a smooth
remainder. Two representations are provided: Fourier coefficients for the
plane-wave Galerkin matrix, and a pointwise Ewald evaluation for quadrature
around the nuclei. An optional smooth periodic term ``W`` is given as a finite
cosine series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .kernels import screened_coulomb_sum
from .pwbasis import PlaneWaveBasis, UnitCell

__all__ = [
    "CosineTerm",
    "NuclearConfiguration",
    "EwaldParameters",
    "LocalPotential",
    "dimer",
    "coulomb_fourier",
    "potential_grid",
    "ewald_point",
    "smooth_complement",
    "smooth_complement_gradient",
    "smooth_complement_box",
    "SingularPointError",
]


class SingularPointError(ValueError):
    """Raised when the potential is requested on top of a nucleus."""


@dataclass(frozen=True)
class CosineTerm:
    """``amplitude * cos(2 pi k . r / L)`` with integer ``k``."""

    k: tuple[int, int, int]
    amplitude: float


@dataclass(frozen=True, eq=False)
class NuclearConfiguration:
    cell: UnitCell
    charges: np.ndarray
    positions: np.ndarray
    smooth_terms: tuple[CosineTerm, ...] = ()

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.charges, dtype=float))
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if len(z) != len(pos):
            raise ValueError("one charge per position is required")
        if np.any(z <= 0):
            raise ValueError("nuclear charges must be positive")
        object.__setattr__(self, "charges", z)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "smooth_terms", tuple(self.smooth_terms))
        if len(z) > 1 and self.min_distance() <= 0:
            raise ValueError("two nuclei coincide under periodic images")

    @property
    def n_sites(self) -> int:
        return len(self.charges)

    def min_distance(self) -> float:
        """Smallest minimum-image distance between distinct nuclei."""
        if self.n_sites < 2:
            return math.inf
        d = self.positions[:, None, :] - self.positions[None, :, :]
        r = np.linalg.norm(self.cell.minimum_image(d), axis=-1)
        return float(np.min(r[~np.eye(self.n_sites, dtype=bool)]))

    def check_balls(self, radius: float) -> None:
        """Reject radii for which augmentation balls would overlap."""
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        if radius >= self.cell.L / 2:
            raise ValueError("ball radius must be below half the cell edge")
        if 2 * radius > self.min_distance() * (1 + 1e-12):
            raise ValueError(
                f"balls of radius {radius} overlap (nearest nuclei {self.min_distance():.6g} apart)")

    def smooth_part(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        out = np.zeros(p.shape[:-1])
        for term in self.smooth_terms:
            kv = (2 * np.pi / self.cell.L) * np.asarray(term.k, dtype=float)
            out += term.amplitude * np.cos(p @ kv)
        return out

    def smooth_part_gradient(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        g = np.zeros(3)
        for term in self.smooth_terms:
            kv = (2 * np.pi / self.cell.L) * np.asarray(term.k, dtype=float)
            g -= term.amplitude * np.sin(p @ kv) * kv
        return g


def dimer(Z: float = 3.0, separation: float = 1.0, L: float = 5.0, axis=(1.0, 0.0, 0.0),
          smooth_terms=()) -> NuclearConfiguration:
    """Two equal nuclei at ``+-separation/2`` along ``axis``, centered at the origin."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    half = 0.5 * separation * a
    return NuclearConfiguration(UnitCell(L), np.array([Z, Z]), np.stack([half, -half]),
                                tuple(smooth_terms))


@dataclass(frozen=True)
class EwaldParameters:
    """Splitting parameter and truncations for the pointwise sum.

    ``eta=None`` means ``6/L``. The reciprocal cutoff is stated for that
    default and grows proportionally with ``eta``.
    """

    eta: float | None = None
    images: int = 1
    recip_cutoff: int = 12

    def resolve(self, L: float) -> tuple[float, int]:
        eta = self.eta if self.eta is not None else 6.0 / L
        kcut = int(math.ceil(self.recip_cutoff * eta * L / 6.0))
        return eta, kcut


@dataclass(frozen=True, eq=False)
class LocalPotential:
    """Potential sampled on the basis grid, ready for the Galerkin product."""

    config: NuclearConfiguration
    basis: PlaneWaveBasis
    grid: np.ndarray = field(repr=False)
    ewald: EwaldParameters = EwaldParameters()


def _structure_factor(config, kint):
    """``sum_I Z_I exp(-i K.R_I)`` for integer wavevectors ``kint``."""
    kv = (2 * np.pi / config.cell.L) * kint
    return np.exp(-1j * (kv @ config.positions.T)) @ config.charges


def coulomb_fourier(config: NuclearConfiguration, kint) -> np.ndarray:
    """Fourier-series coefficients of the periodic potential.

    Returns ``v_K`` with ``V(r) = sum_K v_K exp(iK.r)`` for each integer
    wavevector in ``kint`` (shape ``(..., 3)``). The Coulomb part is
    ``-4 pi / (|cell| K^2) sum_I Z_I exp(-iK.R_I)`` and vanishes at ``K = 0``;
    cosine terms of ``W`` are added on ``+-k``.
    """
    kint = np.asarray(kint)
    vol = config.cell.volume
    if vol <= 0:
        raise ValueError("cell volume must be positive")
    k2 = np.sum(kint.astype(float) ** 2, axis=-1) * (2 * np.pi / config.cell.L) ** 2
    out = np.zeros(kint.shape[:-1], dtype=complex)
    nz = k2 > 0
    out[nz] = -4 * np.pi / vol * _structure_factor(config, kint[nz]) / k2[nz]
    for term in config.smooth_terms:
        kt = np.asarray(term.k)
        hits = np.all(kint == kt, axis=-1) | np.all(kint == -kt, axis=-1)
        if not np.any(kt):
            out[hits] += term.amplitude
        else:
            out[hits] += 0.5 * term.amplitude
    return out


def potential_grid(config: NuclearConfiguration, basis: PlaneWaveBasis) -> LocalPotential:
    """Sample the potential truncated to ``|k|_inf <= 2M`` on the basis grid.

    The truncation is harmless: Galerkin matrix elements between modes with
    ``|k|_inf <= M`` only involve coefficient differences up to ``2M``. Built
    slab by slab through a half-spectrum inverse real FFT to keep the peak
    memory near one grid.
    """
    M2, N = 2 * basis.M, basis.N
    half = np.zeros((N, N, N // 2 + 1), dtype=complex)
    axis = np.arange(-M2, M2 + 1)
    ky, kz = np.meshgrid(axis, np.arange(0, M2 + 1), indexing="ij")
    for kx in axis:
        kint = np.stack([np.full_like(ky, kx), ky, kz], axis=-1)
        half[kx % N, ky % N, kz] = coulomb_fourier(config, kint)
    grid = scipy.fft.irfftn(half, s=(N, N, N), workers=basis.workers, overwrite_x=True)
    grid *= N**3
    return LocalPotential(config, basis, grid)


def _reciprocal_sum(config, points, eta, kcut, exclude=-1, chunk=4096):
    """Long-range Ewald part at arbitrary points by separable synthesis."""
    L, vol = config.cell.L, config.cell.volume
    axis = np.arange(-kcut, kcut + 1)
    kint = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    k2 = np.sum(kint**2, axis=-1) * (2 * np.pi / L) ** 2
    with np.errstate(divide="ignore"):
        damp = np.where(k2 > 0, np.exp(-k2 / (4 * eta**2)) / k2, 0.0)
    amp = -(4 * np.pi / vol) * damp * _structure_factor(config, kint)
    s = len(axis)
    amp_flat = amp.reshape(s * s, s)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.empty(len(pts))
    freq = 2 * np.pi / L * axis
    for start in range(0, len(pts), chunk):
        p = pts[start:start + chunk]
        ex, ey, ez = (np.exp(1j * np.multiply.outer(p[:, i], freq)) for i in range(3))
        t = (ez @ amp_flat.T).reshape(len(p), s, s)      # sum over kz
        t = np.einsum("pxy,py->px", t, ey)
        out[start:start + chunk] = np.einsum("px,px->p", t, ex).real
    return out


def _ewald(config, points, ewald, exclude):
    eta, kcut = ewald.resolve(config.cell.L)
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, 3)
    short = screened_coulomb_sum(flat, config.positions, config.charges,
                                 config.cell.L, eta, ewald.images, exclude)
    if np.any(np.isnan(short)):
        raise SingularPointError("potential requested at a nuclear position")
    background = np.pi / (eta**2 * config.cell.volume) * np.sum(config.charges)
    total = short + _reciprocal_sum(config, flat, eta, kcut) + background
    return total.reshape(shape)


def ewald_point(config: NuclearConfiguration, points, ewald: EwaldParameters = EwaldParameters()):
    """Periodic Coulomb potential plus ``W`` at arbitrary points (shape ``(..., 3)``)."""
    return _ewald(config, points, ewald, -1) + config.smooth_part(points)


def smooth_complement(config: NuclearConfiguration, site: int, points,
                      ewald: EwaldParameters = EwaldParameters(), radius: float | None = None):
    """``V(r) + Z_I/|r - R_I| + W(r)`` near nucleus ``site``.

    The nearest image of that nucleus contributes ``Z_I erf(eta s)/s`` in
    closed form, so the singular parts are never subtracted numerically.
    When ``radius`` is given, points farther than it from the nucleus are a
    contract violation.
    """
    pts = np.asarray(points, dtype=float)
    if radius is not None:
        s = np.linalg.norm(config.cell.minimum_image(pts - config.positions[site]), axis=-1)
        if np.any(s > radius * (1 + 1e-12)):
            raise ValueError("point outside the augmentation ball")
    return _ewald(config, pts, ewald, site) + config.smooth_part(pts)


def smooth_complement_gradient(config: NuclearConfiguration, site: int,
                               ewald: EwaldParameters = EwaldParameters(),
                               step: float = 2e-3) -> np.ndarray:
    """Gradient of :func:`smooth_complement` at the nucleus (sixth-order differences)."""
    center = config.positions[site]
    coeffs = ((1, 3 / 4), (2, -3 / 20), (3, 1 / 60))
    pts = []
    for axis in range(3):
        for j, _ in coeffs:
            for sign in (1, -1):
                e = np.zeros(3)
                e[axis] = sign * j * step
                pts.append(center + e)
    vals = smooth_complement(config, site, np.array(pts), ewald).reshape(3, len(coeffs), 2)
    grad = np.zeros(3)
    for axis in range(3):
        for idx, (_, c) in enumerate(coeffs):
            grad[axis] += c * (vals[axis, idx, 0] - vals[axis, idx, 1])
    return grad / step


def _reciprocal_box(config, axes, eta, kcut):
    """Long-range Ewald part on the tensor grid ``axes[0] x axes[1] x axes[2]``."""
    L, vol = config.cell.L, config.cell.volume
    ax = np.arange(-kcut, kcut + 1)
    kint = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    k2 = np.sum(kint**2, axis=-1) * (2 * np.pi / L) ** 2
    with np.errstate(divide="ignore"):
        damp = np.where(k2 > 0, np.exp(-k2 / (4 * eta**2)) / k2, 0.0)
    amp = -(4 * np.pi / vol) * damp * _structure_factor(config, kint)
    freq = 2 * np.pi / L * ax
    ex, ey, ez = (np.exp(1j * np.multiply.outer(np.asarray(a, dtype=float), freq)) for a in axes)
    t = np.tensordot(amp, ez, axes=([2], [1]))          # kx, ky, z
    t = np.tensordot(t, ey, axes=([1], [1]))            # kx, z, y
    t = np.tensordot(t, ex, axes=([0], [1]))            # z, y, x
    return np.ascontiguousarray(t.transpose(2, 1, 0).real)


def smooth_complement_box(config: NuclearConfiguration, site: int, offsets, mask=None,
                          ewald: EwaldParameters = EwaldParameters()) -> np.ndarray:
    """:func:`smooth_complement` on the cubic grid ``R_site + (offsets x offsets x offsets)``.

    Only entries where ``mask`` is true are computed (others are zero); the
    long-range part is synthesized separably over the whole box.
    """
    eta, kcut = ewald.resolve(config.cell.L)
    offsets = np.asarray(offsets, dtype=float)
    center = config.positions[site]
    axes = [center[i] + offsets for i in range(3)]
    n = len(offsets)
    if mask is None:
        mask = np.ones((n, n, n), dtype=bool)
    out = _reciprocal_box(config, axes, eta, kcut)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)[mask]
    short = screened_coulomb_sum(grid, config.positions, config.charges,
                                 config.cell.L, eta, ewald.images, site)
    if np.any(np.isnan(short)):
        raise SingularPointError("box grid touches another nucleus")
    background = np.pi / (eta**2 * config.cell.volume) * np.sum(config.charges)
    out[mask] += short + background + config.smooth_part(grid)
    out[~mask] = 0.0
    return out
