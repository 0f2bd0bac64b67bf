"""Plane-wave basis on a cubic periodic cell.

Basis functions are ``e_K(r) = |cell|^{-1/2} exp(i K.r)`` with
``K = 2 pi k / L`` and ``max_i |k_i| <= M``. Coefficient vectors are ordered
C-style over ``(kx, ky, kz)`` with every component running from ``-M`` to
``M``, so the mode ``-k`` of entry ``i`` sits at entry ``n - 1 - i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

__all__ = ["UnitCell", "PlaneWaveBasis", "build_basis", "to_grid", "from_grid",
           "real_to_complex", "complex_to_real", "to_real_grid", "from_real_grid",
           "transfer_coefficients"]


@dataclass(frozen=True)
class UnitCell:
    L: float

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"cell edge must be positive, got {self.L!r}")

    @property
    def volume(self) -> float:
        return self.L**3

    def minimum_image(self, d):
        d = np.asarray(d, dtype=float)
        return d - self.L * np.round(d / self.L)


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    cell: UnitCell
    M: int
    N: int
    workers: int = 1
    k_int: np.ndarray = field(repr=False, default=None)

    @property
    def L(self) -> float:
        return self.cell.L

    @property
    def size(self) -> int:
        return (2 * self.M + 1) ** 3

    @property
    def side(self) -> int:
        return 2 * self.M + 1

    @property
    def kvectors(self) -> np.ndarray:
        return (2.0 * np.pi / self.L) * self.k_int

    @property
    def kinetic(self) -> np.ndarray:
        """Diagonal of ``-1/2 Laplacian`` in this basis."""
        return 0.5 * (2.0 * np.pi / self.L) ** 2 * np.sum(self.k_int**2, axis=1)

    @property
    def k_norm(self) -> np.ndarray:
        return (2.0 * np.pi / self.L) * np.sqrt(np.sum(self.k_int**2, axis=1))

    @property
    def grid_spacing(self) -> float:
        return self.L / self.N

    def index_of(self, k) -> np.ndarray:
        """Linear index of integer wavevector(s) ``k``."""
        k = np.asarray(k, dtype=np.int64)
        if np.any(np.abs(k) > self.M):
            raise IndexError("wavevector outside the cutoff")
        s = self.side
        shifted = k + self.M
        return (shifted[..., 0] * s + shifted[..., 1]) * s + shifted[..., 2]

    def grid_points(self) -> np.ndarray:
        """Real-space sample positions as an ``(N, N, N, 3)`` array."""
        x = np.arange(self.N) * self.grid_spacing
        return np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)

    def _grid_slices(self):
        """Index arrays placing the coefficient cube into the FFT grid."""
        ax = np.arange(-self.M, self.M + 1) % self.N
        return np.ix_(ax, ax, ax)

    def _check_coeffs(self, coeffs):
        c = np.asarray(coeffs)
        if c.shape[0] != self.size:
            raise ValueError(f"coefficient vector has length {c.shape[0]}, expected {self.size}")
        return c


def build_basis(L: float, M: int, oversample: float = 1.0, *, workers: int = 1) -> PlaneWaveBasis:
    """Build the cube-cutoff basis and its FFT grid.

    The grid has the smallest 5-smooth size ``N >= oversample * (4M + 1)``,
    large enough to represent products of two band-limited fields exactly.
    ``M = 0`` gives the single constant mode.
    """
    cell = UnitCell(float(L))
    if int(M) != M or M < 0:
        raise ValueError(f"cutoff must be a non-negative integer, got {M!r}")
    if oversample < 1:
        raise ValueError("oversample factor must be at least 1")
    M = int(M)
    # 5-smooth sizes: radices 7 and 11 are markedly slower for the real transforms
    N = scipy.fft.next_fast_len(int(math.ceil(oversample * (4 * M + 1))), real=True)
    axis = np.arange(-M, M + 1)
    k = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    k.flags.writeable = False
    return PlaneWaveBasis(cell, M, N, max(1, int(workers)), k)


def to_grid(coeffs, basis: PlaneWaveBasis) -> np.ndarray:
    """Synthesize ``|cell|^{-1/2} sum_K c_K exp(iK.r)`` on the ``N^3`` grid.

    A trailing batch axis is allowed: ``coeffs`` of shape ``(n, b)`` gives a
    grid of shape ``(N, N, N, b)``.
    """
    c = basis._check_coeffs(coeffs)
    s, N = basis.side, basis.N
    batch = c.shape[1:]
    grid = np.zeros((N, N, N) + batch, dtype=complex)
    grid[basis._grid_slices()] = c.reshape((s, s, s) + batch)
    field_ = scipy.fft.ifftn(grid, axes=(0, 1, 2), workers=basis.workers, overwrite_x=True)
    field_ *= N**3 / math.sqrt(basis.cell.volume)
    return field_


def from_grid(field_, basis: PlaneWaveBasis) -> np.ndarray:
    """Band-limited coefficients of a grid field (adjoint-consistent with :func:`to_grid`)."""
    f = np.asarray(field_)
    N = basis.N
    if f.shape[:3] != (N, N, N):
        raise ValueError(f"grid field has shape {f.shape[:3]}, expected {(N, N, N)}")
    spec = scipy.fft.fftn(f, axes=(0, 1, 2), workers=basis.workers)
    c = spec[basis._grid_slices()] * (math.sqrt(basis.cell.volume) / N**3)
    return c.reshape((basis.size,) + f.shape[3:])


# Real coordinates for fields that are real in space, i.e. c_{-K} = conj(c_K).
# With b = a[n-1-i] and i past the centre:  c_i = (a_i - i b)/sqrt2,
# c_{n-1-i} = (a_i + i b)/sqrt2, c_centre = a_centre.  The map is an isometry.

_SQRT_HALF = math.sqrt(0.5)


def real_to_complex(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    mid = n // 2
    upper, lower = a[mid + 1:], a[:mid][::-1]
    c = np.empty(a.shape, dtype=complex)
    c[mid] = a[mid]
    c[mid + 1:] = _SQRT_HALF * (upper - 1j * lower)
    c[:mid] = _SQRT_HALF * (upper + 1j * lower)[::-1]
    return c


def complex_to_real(c) -> np.ndarray:
    """Inverse of :func:`real_to_complex` (the anti-symmetric part is dropped)."""
    c = np.asarray(c)
    n = c.shape[0]
    mid = n // 2
    upper = c[mid + 1:]
    mirror = np.conj(c[:mid][::-1])
    avg = 0.5 * (upper + mirror)
    a = np.empty(c.shape, dtype=float)
    a[mid] = c[mid].real
    a[mid + 1:] = math.sqrt(2.0) * avg.real
    a[:mid] = (-math.sqrt(2.0) * avg.imag)[::-1]
    return a


def to_real_grid(a, basis: PlaneWaveBasis) -> np.ndarray:
    """Real field on the grid from real coordinates (half-spectrum inverse FFT).

    The transform runs one axis at a time and skips the slabs that are zero
    outside the cutoff, which cuts the work of the first two passes.
    """
    c = real_to_complex(basis._check_coeffs(a))
    M, s, N = basis.M, basis.side, basis.N
    ax = np.arange(-M, M + 1) % N
    slab = np.zeros((N, s, M + 1), dtype=complex)
    slab[ax] = c.reshape(s, s, s)[:, :, M:]
    slab = scipy.fft.ifft(slab, axis=0, workers=basis.workers, overwrite_x=True)
    half = np.zeros((N, N, N // 2 + 1), dtype=complex)
    half[:, ax, :M + 1] = slab
    del slab
    half[:, :, :M + 1] = scipy.fft.ifft(half[:, :, :M + 1], axis=1, workers=basis.workers)
    field_ = scipy.fft.irfft(half, n=N, axis=2, workers=basis.workers, overwrite_x=True)
    field_ *= N**3 / math.sqrt(basis.cell.volume)
    return field_


def from_real_grid(field_, basis: PlaneWaveBasis) -> np.ndarray:
    """Real coordinates of the band-limited projection of a real grid field."""
    f = np.asarray(field_, dtype=float)
    M, s, N = basis.M, basis.side, basis.N
    if f.shape != (N, N, N):
        raise ValueError(f"grid field has shape {f.shape}, expected {(N, N, N)}")
    ax = np.arange(-M, M + 1) % N
    half = scipy.fft.rfft(f, axis=2, workers=basis.workers)[:, :, :M + 1]
    half = scipy.fft.fft(half, axis=1, workers=basis.workers, overwrite_x=True)[:, ax, :]
    half = scipy.fft.fft(half, axis=0, workers=basis.workers, overwrite_x=True)[ax]
    cube = np.empty((s, s, s), dtype=complex)
    cube[:, :, M:] = half
    cube[:, :, :M] = np.conj(half[::-1, ::-1, 1:][:, :, ::-1])
    cube *= math.sqrt(basis.cell.volume) / N**3
    return complex_to_real(cube.reshape(-1))


def transfer_coefficients(coeffs, source: PlaneWaveBasis, target: PlaneWaveBasis,
                          real: bool = False) -> np.ndarray:
    """Re-express coefficients on another cutoff: zero-pad or truncate by wavevector.

    ``real=True`` treats ``coeffs`` as real coordinates. A trailing batch axis
    is carried along.
    """
    if source.L != target.L:
        raise ValueError("bases live on different cells")
    c = source._check_coeffs(coeffs)
    if real:
        c = real_to_complex(c)
    m = min(source.M, target.M)
    batch = c.shape[1:]
    cube = c.reshape((source.side,) * 3 + batch)
    out = np.zeros((target.side,) * 3 + batch, dtype=complex)
    src = slice(source.M - m, source.M + m + 1)
    dst = slice(target.M - m, target.M + m + 1)
    out[dst, dst, dst] = cube[src, src, src]
    out = out.reshape((target.size,) + batch)
    return complex_to_real(out) if real else out
