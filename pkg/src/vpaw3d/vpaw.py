"""Plane-wave Hamiltonian and its VPAW-transformed pair ``(H_vpaw, S_vpaw)``.

With ``T = sum (phi - phi~) <p~, .>`` over sites and PAW functions, the
transformed operators are

    H_vpaw = H + HG P^* + P HG^* + P D_H P^*
    S_vpaw = I + G P^*  + P G^*  + P D_S P^*

where the columns of ``P``, ``G`` and ``HG`` are plane-wave coefficients of
``p~``, ``phi - phi~`` and ``H (phi - phi~)``, and ``D_H``, ``D_S`` are the
site-local matrices ``<phi - phi~, H (phi - phi~)>`` and
``<phi - phi~, phi - phi~>``.

Two coefficient representations are supported. ``"complex"`` works with the
raw coefficient vectors. ``"real"`` restricts to fields that are real in
space (``c_{-K} = conj(c_K)``), stored in real coordinates; this halves
memory and FFT work, and is exact because every operator here maps real
fields to real fields.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft

from .atomic import PawDataset, validate_dataset
from .potential import (EwaldParameters, LocalPotential, NuclearConfiguration,
                        potential_grid, smooth_complement, smooth_complement_box,
                        smooth_complement_gradient)
from .pwbasis import (PlaneWaveBasis, complex_to_real, from_grid, from_real_grid,
                      real_to_complex, to_grid, to_real_grid)
from .specialfn import bessel_transform_table, gauss_legendre, real_sph_harm

__all__ = ["VpawOperator", "ProjectorLabel", "assemble", "matvec_cost_profile",
           "AssemblyError", "ball_grid_size"]

_FOUR_PI = 4.0 * np.pi


class AssemblyError(ValueError):
    """The operator cannot be assembled (overlapping balls, bad dataset)."""


@dataclass(frozen=True)
class ProjectorLabel:
    site: int
    n: int
    l: int
    m: int

    def __str__(self):
        return f"site{self.site}:{self.n}{'spdf'[self.l]}{self.m:+d}"


@dataclass(eq=False)
class VpawOperator:
    basis: PlaneWaveBasis
    config: NuclearConfiguration
    potential: LocalPotential
    representation: str
    labels: list[ProjectorLabel]
    P: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    HG: np.ndarray = field(repr=False)
    D_H: np.ndarray = field(repr=False)
    D_S: np.ndarray = field(repr=False)
    dataset_names: tuple[str, ...] = ()

    # -- basic properties -------------------------------------------------
    @property
    def dim(self) -> int:
        return self.basis.size

    @property
    def n_projectors(self) -> int:
        return len(self.labels)

    @property
    def dtype(self):
        return np.float64 if self.representation == "real" else np.complex128

    @property
    def kinetic(self) -> np.ndarray:
        return self.basis.kinetic

    @property
    def description(self) -> str:
        return "+".join(self.dataset_names) if self.dataset_names else "direct"

    def _check(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.dim:
            raise ValueError(f"vector has length {x.shape[0]}, expected {self.dim}")
        return x

    def _adjoint(self, A, x):
        return A.T @ x if self.representation == "real" else A.conj().T @ x

    # -- matvecs ----------------------------------------------------------
    def apply_potential(self, x):
        x = self._check(x)
        if x.ndim == 2:
            return np.stack([self.apply_potential(col) for col in x.T], axis=1)
        if self.representation == "real":
            f = to_real_grid(x, self.basis)
            f *= self.potential.grid
            return from_real_grid(f, self.basis)
        f = to_grid(x, self.basis)
        f *= self.potential.grid
        return from_grid(f, self.basis)

    def apply_H(self, x):
        """Kinetic energy plus the Galerkin product with the local potential."""
        x = self._check(x)
        kin = self.kinetic if x.ndim == 1 else self.kinetic[:, None]
        return kin * x + self.apply_potential(x)

    def project(self, x):
        """``<p~_j, x>`` for every projector."""
        return self._adjoint(self.P, self._check(x))

    def apply_Hvpaw(self, x):
        x = self._check(x)
        y = self.apply_H(x)
        if self.n_projectors:
            px = self.project(x)
            y += self.P @ (self.D_H @ px) + self.HG @ px + self.P @ self._adjoint(self.HG, x)
        return y

    def apply_Svpaw(self, x):
        x = self._check(x)
        y = np.array(x, dtype=self.dtype, copy=True)
        if self.n_projectors:
            px = self.project(x)
            y += self.P @ (self.D_S @ px) + self.G @ px + self.P @ self._adjoint(self.G, x)
        return y

    def apply_id_plus_T(self, x):
        """Map a transformed coefficient vector back to the physical one."""
        x = self._check(x)
        y = np.array(x, dtype=self.dtype, copy=True)
        if self.n_projectors:
            y += self.G @ self.project(x)
        return y

    def to_complex(self, x):
        """Complex coefficients of a vector in this operator's representation."""
        if self.representation == "real":
            return real_to_complex(x)
        return np.asarray(x)


# ---------------------------------------------------------------------------
# assembly helpers


def ball_grid_size(M: int, oversample: float) -> int:
    """Points per direction of the fine uniform grid used inside the balls."""
    return scipy.fft.next_fast_len(int(math.ceil(oversample * (4 * M + 1))))


def _functions(dataset):
    return [(c, m) for c in dataset.channels for m in range(-c.l, c.l + 1)]


class _Columns:
    """Fills plane-wave columns in chosen representation, one function at a time."""

    def __init__(self, basis, representation, count):
        self.basis = basis
        self.rep = representation
        dtype = np.float64 if representation == "real" else np.complex128
        self.out = {name: np.zeros((basis.size, count), dtype=dtype) for name in ("P", "G", "HG")}
        k2 = np.sum(basis.k_int.astype(np.int64) ** 2, axis=1)
        self.k2_unique, self.k2_index = np.unique(k2, return_inverse=True)
        self.k_unique = (2 * np.pi / basis.L) * np.sqrt(self.k2_unique)
        self.inv_sqrt_vol = 1.0 / math.sqrt(basis.cell.volume)

    def harmonic(self, l, m):
        """``4 pi i^l Y_lm(-K)`` for every basis vector."""
        return _FOUR_PI * (1j**l) * real_sph_harm(l, m, -self.basis.k_int.astype(float))

    def phase(self, position):
        return np.exp(-1j * (self.basis.kvectors @ position)) * self.inv_sqrt_vol

    def store(self, name, j, column):
        self.out[name][:, j] = complex_to_real(column) if self.rep == "real" else column


def _radial_tables(channel, k_unique, r_c, d):
    """Radial transforms needed for one channel, on the distinct wavenumbers."""
    l = channel.l

    def stacked(r):
        rl = r**l
        diff = channel.difference(r)
        rows = [rl * channel.projector(r), rl * diff,
                rl * channel.radial_operator_difference(r)]
        return np.array(rows)

    floor = 2 * max(64, 16 * d)
    tab = bessel_transform_table(stacked, l, k_unique, r_c, min_nodes=floor)
    out = {"P": tab[0], "G": tab[1], "HG_radial": tab[2]}
    if l == 0:
        # first-order term of the smooth potential: s (u - u~) / sqrt(3) on l = 1
        out["HG_linear"] = bessel_transform_table(
            lambda r: r * channel.difference(r) / math.sqrt(3.0), 1, k_unique, r_c,
            min_nodes=floor)
    return out


def _ball_box(r_c, spacing):
    half = int(math.floor(r_c / spacing))
    offsets = spacing * np.arange(-half, half + 1)
    x, y, z = np.meshgrid(offsets, offsets, offsets, indexing="ij")
    s = np.sqrt(x * x + y * y + z * z)
    return offsets, np.stack([x, y, z], axis=-1), s, s < r_c


def _box_dft(values, offsets, basis):
    """``sum_g f_g exp(-i K . x_g)`` over a centred cubic box, separably."""
    ax = np.arange(-basis.M, basis.M + 1)
    e = np.exp(-1j * (2 * np.pi / basis.L) * np.multiply.outer(ax, offsets))
    b = len(offsets)
    t = (values.reshape(b * b, b) @ e.T).reshape(b, b, -1)      # x, y, kz
    t = np.tensordot(t, e, axes=([1], [1]))                     # x, kz, ky
    t = np.tensordot(t, e, axes=([0], [1]))                     # kz, ky, kx
    return np.ascontiguousarray(t.transpose(2, 1, 0)).reshape(-1)


def _site_matrices(channel_funcs, config, site, r_c, d, ewald, sphere_nodes):
    """``D_S`` and ``D_H`` for one site."""
    n = len(channel_funcs)
    D_S = np.zeros((n, n))
    D_H = np.zeros((n, n))
    r, w = gauss_legendre(max(64, 16 * d) * 2, 0.0, r_c)
    for i, (ci, mi) in enumerate(channel_funcs):
        for j, (cj, mj) in enumerate(channel_funcs):
            if ci.l != cj.l or mi != mj:
                continue
            weight = w * r ** (2 * ci.l + 2)
            D_S[i, j] = np.sum(weight * ci.difference(r) * cj.difference(r))
            D_H[i, j] = np.sum(weight * ci.difference(r) * cj.radial_operator_difference(r))

    # smooth part of the potential on a spherical product rule about the nucleus
    n_r, n_t, n_p = sphere_nodes
    rs, ws = gauss_legendre(n_r, 0.0, r_c)
    ct, wt = gauss_legendre(n_t, -1.0, 1.0)
    phi = 2 * np.pi * np.arange(n_p) / n_p
    st = np.sqrt(1.0 - ct**2)
    dirs = np.stack([np.multiply.outer(st, np.cos(phi)),
                     np.multiply.outer(st, np.sin(phi)),
                     np.multiply.outer(ct, np.ones(n_p))], axis=-1)          # (t, p, 3)
    pts = config.positions[site] + np.multiply.outer(rs, dirs)               # (r, t, p, 3)
    vrem = smooth_complement(config, site, pts, ewald)
    weights = np.multiply.outer(ws * rs**2, np.multiply.outer(wt, np.full(n_p, 2 * np.pi / n_p)))
    fvals = []
    for c, m in channel_funcs:
        radial = rs**c.l * c.difference(rs)
        fvals.append(np.multiply.outer(radial, real_sph_harm(c.l, m, dirs)))
    fvals = np.array(fvals).reshape(n, -1)
    D_H += (fvals * (weights * vrem).reshape(-1)) @ fvals.T
    return 0.5 * (D_S + D_S.T), 0.5 * (D_H + D_H.T)


def _resolve_datasets(config, datasets):
    if datasets is None:
        return [None] * config.n_sites
    if isinstance(datasets, PawDataset):
        return [datasets] * config.n_sites
    datasets = list(datasets)
    if not datasets:
        return [None] * config.n_sites
    if len(datasets) != config.n_sites:
        raise AssemblyError("give one dataset per site, a single shared dataset, or none")
    return datasets


def assemble(basis: PlaneWaveBasis, config: NuclearConfiguration,
             datasets: PawDataset | Sequence[PawDataset | None] | None = None, *,
             oversample: float = 2.0, ewald: EwaldParameters = EwaldParameters(),
             representation: str = "complex", validate: bool = True,
             sphere_nodes: tuple[int, int, int] = (32, 16, 32),
             potential: LocalPotential | None = None) -> VpawOperator:
    """Build all plane-wave and site matrices of the (transformed) Hamiltonian.

    ``datasets`` may be a single dataset shared by every site, one per site
    (``None`` entries leave a site unaugmented), or empty for the plain
    Hamiltonian. ``oversample`` sets the fine grid used for the part of
    ``H (phi - phi~)`` that carries the smooth potential.
    """
    if representation not in ("complex", "real"):
        raise ValueError("representation must be 'complex' or 'real'")
    if not np.isclose(basis.L, config.cell.L):
        raise AssemblyError("basis and nuclear configuration use different cells")
    per_site = _resolve_datasets(config, datasets)
    for ds in per_site:
        if ds is None:
            continue
        if ds.build_error is not None:
            raise AssemblyError(f"dataset {ds.name!r} has no projectors: {ds.build_error}")
        try:
            config.check_balls(ds.r_c)
        except ValueError as exc:
            raise AssemblyError(str(exc)) from exc
        if validate:
            report = validate_dataset(ds)
            if not report.ok:
                raise AssemblyError(f"dataset {ds.name!r} failed validation: "
                                    + "; ".join(report.failures))

    if potential is None:
        potential = potential_grid(config, basis)
    labels: list[ProjectorLabel] = []
    for site, ds in enumerate(per_site):
        if ds is not None:
            labels += [ProjectorLabel(site, c.n, c.l, m) for c, m in _functions(ds)]
    count = len(labels)
    cols = _Columns(basis, representation, count)
    D_H = np.zeros((count, count))
    D_S = np.zeros((count, count))

    col = 0
    names = []
    for site, ds in enumerate(per_site):
        if ds is None:
            continue
        names.append(ds.name)
        r_c = ds.r_c
        funcs = _functions(ds)
        position = config.positions[site]
        phase = cols.phase(position)
        v0 = float(smooth_complement(config, site, position[None, :], ewald)[0])
        grad = smooth_complement_gradient(config, site, ewald)

        # fine uniform grid in the ball for the non-radial potential term
        spacing = basis.L / ball_grid_size(basis.M, oversample)
        offsets, box, s_box, inside = _ball_box(r_c, spacing)
        vrem = smooth_complement_box(config, site, offsets, inside, ewald)
        linear = box @ grad
        k_norm = None

        tables = {id(c): _radial_tables(c, cols.k_unique, r_c, ds.d) for c in ds.channels}
        idx = cols.k2_index
        block = slice(col, col + len(funcs))
        for c, m in funcs:
            tab = tables[id(c)]
            ang = cols.harmonic(c.l, m) * phase
            cols.store("P", col, ang * tab["P"][idx])
            cols.store("G", col, ang * tab["G"][idx])

            hg = ang * (tab["HG_radial"][idx] + v0 * tab["G"][idx])
            smooth = vrem - v0
            if c.l == 0:
                if k_norm is None:
                    k_norm = basis.k_norm
                    with np.errstate(invalid="ignore", divide="ignore"):
                        kdir = np.where(k_norm > 0, (basis.kvectors @ grad) / k_norm, 0.0)
                # sum_m g_m Y_1m(-K) = -sqrt(3/4pi) g.K/|K|
                lin_ang = _FOUR_PI * 1j * (-math.sqrt(3.0 / _FOUR_PI)) * kdir
                hg += phase * lin_ang * tab["HG_linear"][idx]
                smooth = smooth - linear
            radial = np.where(inside, s_box**c.l * c.difference(np.where(inside, s_box, 0.0)), 0.0)
            values = np.where(inside, smooth * radial * real_sph_harm(c.l, m, box), 0.0)
            hg += phase * spacing**3 * _box_dft(values, offsets, basis)
            cols.store("HG", col, hg)
            col += 1
        ds_s, ds_h = _site_matrices(funcs, config, site, r_c, ds.d, ewald, sphere_nodes)
        D_S[block, block] = ds_s
        D_H[block, block] = ds_h

    return VpawOperator(basis, config, potential, representation, labels,
                        cols.out["P"], cols.out["G"], cols.out["HG"], D_H, D_S, tuple(names))


# ---------------------------------------------------------------------------


def matvec_cost_profile(op: VpawOperator, repetitions: int = 3, seed: int = 0) -> dict:
    """Mean wall time (seconds) of the four terms of one transformed matvec.

    Terms: ``fft`` (kinetic plus local potential), ``projector``
    (``P D_H P^* x``), ``hg_apply`` (``HG P^* x``) and ``hg_adjoint``
    (``P HG^* x``). Zero repetitions give an empty record.
    """
    if repetitions <= 0:
        return {}
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.dim)
    if op.representation == "complex":
        x = x + 1j * rng.standard_normal(op.dim)
    terms = {
        "fft": lambda: op.apply_H(x),
        "projector": lambda: op.P @ (op.D_H @ op.project(x)),
        "hg_apply": lambda: op.HG @ op.project(x),
        "hg_adjoint": lambda: op.P @ op._adjoint(op.HG, x),
    }
    record = {}
    for name, fn in terms.items():
        fn()
        start = time.perf_counter()
        for _ in range(repetitions):
            fn()
        record[name] = (time.perf_counter() - start) / repetitions
    return record
