"""Atomic radial functions, pseudization and dual projectors.

Every radial function here is stored with its ``r^l`` factor removed: the
three-dimensional function is ``r^l u(r) Y_lm``. Atomic functions are
hydrogenoid eigenfunctions written as ``exp(-a r) q(r)`` with a polynomial
``q``, so derivatives and Taylor coefficients are exact.

Pseudo functions are even polynomials on ``[0, r_c]`` expanded in
``P_k(t) = (t^2 - 1)^k / (2^k k!)`` with ``t = r / r_c``; the coefficients
come from a triangular recurrence that matches ``d`` derivatives at ``r_c``.
Projectors are ``p_i = sum_j (B^-1)_ij chi u~_j`` with the chi-weighted Gram
matrix ``B``; they are biorthogonal to the pseudo functions.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .specialfn import gauss_legendre

__all__ = [
    "ExpPolyRadial",
    "hydrogenoid",
    "PseudoRadial",
    "build_pseudo",
    "bump",
    "ProjectorSet",
    "build_projectors",
    "PawChannel",
    "PawDataset",
    "build_dataset",
    "dataset_from_atomics",
    "preset_dataset",
    "PRESETS",
    "ValidationReport",
    "validate_dataset",
    "kato_recurrence_check",
    "save_dataset",
    "load_dataset",
    "DatasetError",
    "DatasetFormatError",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
GRAM_CONDITION_LIMIT = 1e12


class DatasetError(ValueError):
    """A dataset cannot be built or fails validation."""


class DatasetFormatError(DatasetError):
    """A dataset file is malformed, truncated or has a bad checksum."""


# ---------------------------------------------------------------------------
# Atomic functions


@dataclass(frozen=True, eq=False)
class ExpPolyRadial:
    """Radial function ``exp(-decay * r) * poly(r)``.

    ``epsilon`` and ``Z`` are set for atomic eigenfunctions and ``None`` for
    synthetic inputs.
    """

    decay: float
    poly: Polynomial
    l: int = 0
    Z: float | None = None
    n: int | None = None
    epsilon: float | None = None
    _derived: list = field(default_factory=list, repr=False)

    def _poly_derivative(self, order: int) -> Polynomial:
        # (e^{-ar} q)^{(j)} = e^{-ar} q_j  with  q_{j+1} = q_j' - a q_j
        cache = self._derived
        if not cache:
            cache.append(self.poly)
        while len(cache) <= order:
            q = cache[-1]
            cache.append(q.deriv() - self.decay * q)
        return cache[order]

    def derivative(self, r, order: int = 0):
        r = np.asarray(r, dtype=float)
        return np.exp(-self.decay * r) * self._poly_derivative(order)(r)

    def __call__(self, r):
        return self.derivative(r, 0)

    def taylor(self, order: int) -> np.ndarray:
        """Taylor coefficients ``t_0..t_order`` of ``u`` at the origin."""
        return np.array([self._poly_derivative(i)(0.0) / math.factorial(i)
                         for i in range(order + 1)])

    def radial_operator(self, r):
        """``-u''/2 - (l+1) u'/r - Z u/r``, the l-stripped radial Hamiltonian."""
        r = np.asarray(r, dtype=float)
        return (-0.5 * self.derivative(r, 2) - (self.l + 1) * self.derivative(r, 1) / r
                - self.Z * self.derivative(r, 0) / r)


def _laguerre(k: int, alpha: int) -> Polynomial:
    return Polynomial([(-1) ** i * math.comb(k + alpha, k - i) / math.factorial(i)
                       for i in range(k + 1)])


def hydrogenoid(n: int, l: int, Z: float) -> ExpPolyRadial:
    """Hydrogenoid eigenfunction with the ``r^l`` factor removed.

    ``u(r) = N (2Z/n)^l exp(-Zr/n) L_{n-l-1}^{(2l+1)}(2Zr/n)`` normalized so
    that ``int (r^l u)^2 r^2 dr = 1``; the eigenvalue is ``-Z^2 / (2 n^2)``.
    """
    if l < 0 or n <= l:
        raise ValueError(f"hydrogenoid needs n > l >= 0, got n={n}, l={l}")
    if Z <= 0:
        raise ValueError("nuclear charge must be positive")
    rho = 2.0 * Z / n
    norm = math.sqrt(rho**3 * math.factorial(n - l - 1) / (2 * n * math.factorial(n + l)))
    lag = _laguerre(n - l - 1, 2 * l + 1)
    poly = norm * rho**l * lag(Polynomial([0.0, rho]))
    return ExpPolyRadial(Z / n, poly, l, float(Z), n, -Z**2 / (2.0 * n**2))


# ---------------------------------------------------------------------------
# Pseudization


def _p_basis(k: int) -> Polynomial:
    return Polynomial([-1.0, 0.0, 1.0]) ** k / (2.0**k * math.factorial(k))


@dataclass(frozen=True, eq=False)
class PseudoRadial:
    """Even polynomial inside ``r_c`` matched to a parent function outside."""

    parent: ExpPolyRadial
    r_c: float
    coeffs: np.ndarray
    poly_t: Polynomial = field(repr=False, default=None)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", c)
        p = Polynomial([0.0])
        for k, ck in enumerate(c):
            p = p + ck * _p_basis(k)
        object.__setattr__(self, "poly_t", p)

    @property
    def d(self) -> int:
        return len(self.coeffs)

    @property
    def l(self) -> int:
        return self.parent.l

    def inner(self, r, order: int = 0):
        """Derivative of the polynomial piece (valid for any ``r``)."""
        r = np.asarray(r, dtype=float)
        return self.poly_t.deriv(order)(r / self.r_c) / self.r_c**order if order else \
            self.poly_t(r / self.r_c)

    def derivative(self, r, order: int = 0):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.r_c, self.inner(r, order), self.parent.derivative(r, order))

    def __call__(self, r):
        return self.derivative(r, 0)

    def radial_operator_inner(self, r):
        """``-u~''/2 - (l+1) u~'/r - Z u~/r`` for the polynomial piece."""
        r = np.asarray(r, dtype=float)
        # u~ is even, so u~'/r is a polynomial; evaluate it without dividing by r
        dt = self.poly_t.deriv()
        over_r = Polynomial(dt.coef[1:]) if len(dt.coef) > 1 else Polynomial([0.0])
        first_over_r = over_r(r / self.r_c) / self.r_c**2
        return (-0.5 * self.inner(r, 2) - (self.l + 1) * first_over_r
                - self.parent.Z * self.inner(r) / r)


def build_pseudo(u: ExpPolyRadial, r_c: float, d: int) -> PseudoRadial:
    """Match ``d`` derivatives (orders ``0..d-1``) of ``u`` at ``r_c``.

    ``c_j = r_c^j u^(j)(r_c) - sum_{k<j} P_k^(j)(1) c_k``, using
    ``P_k^(j)(1) = 0`` for ``j < k`` and ``P_k^(k)(1) = 1``.
    """
    if not r_c > 0:
        raise ValueError("cut-off radius must be positive")
    if d < 1:
        raise ValueError("smoothness order must be at least 1")
    targets = [r_c**j * float(u.derivative(r_c, j)) for j in range(d)]
    if not np.all(np.isfinite(targets)):
        raise DatasetError("derivative evaluation failed at the cut-off radius")
    basis_derivs = [[_p_basis(k).deriv(j)(1.0) if j else _p_basis(k)(1.0) for k in range(d)]
                    for j in range(d)]
    c = np.zeros(d)
    for j in range(d):
        c[j] = targets[j] - sum(basis_derivs[j][k] * c[k] for k in range(j))
    return PseudoRadial(u, r_c, c)


# ---------------------------------------------------------------------------
# Projectors


def bump(t):
    """``exp(1 - 1/(4t(1-t)))`` on ``(0, 1)``, zero elsewhere; peak 1 at ``t = 1/2``."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    return np.where(inside, np.exp(1.0 - 1.0 / (4.0 * tt * (1.0 - tt))), 0.0)


def radial_nodes(r_c: float, d: int, refine: int = 0):
    """Gauss-Legendre rule on ``[0, r_c]`` with ``max(64, 16 d) * 2^refine`` nodes."""
    return gauss_legendre(max(64, 16 * d) * 2**refine, 0.0, r_c)


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """Projectors of one angular channel: ``p_i = sum_j coeffs[i, j] chi u~_j``."""

    pseudos: tuple[PseudoRadial, ...]
    coeffs: np.ndarray
    r_c: float
    chi_scale: float = 1.0
    gram_condition: float = float("nan")

    def chi(self, r):
        return self.chi_scale * bump(np.asarray(r) / self.r_c)

    def values(self, r) -> np.ndarray:
        """Array of shape ``(n_proj, len(r))``; zero for ``r >= r_c``."""
        r = np.asarray(r, dtype=float)
        inner = np.array([p.inner(r) for p in self.pseudos])
        return np.tensordot(self.coeffs, inner, axes=1) * self.chi(r)


def _weighted_gram(f_rows, g_rows, r, w, l):
    return (f_rows * (w * r ** (2 + 2 * l))) @ g_rows.T


def build_projectors(pseudos: Sequence[PseudoRadial], r_c: float | None = None,
                     chi_scale: float = 1.0, max_refine: int = 4) -> ProjectorSet:
    """Dual projectors for one angular channel.

    The Gram integrals use Gauss-Legendre with ``max(64, 16 d)`` nodes,
    doubled until the Gram matrix moves by less than ``1e-13`` relative.
    Raises :class:`DatasetError` when the Gram matrix has condition number
    above ``1e12``.
    """
    pseudos = tuple(pseudos)
    if not pseudos:
        raise ValueError("at least one pseudo function is required")
    l = pseudos[0].l
    if any(p.l != l for p in pseudos):
        raise ValueError("projectors are built per angular channel")
    r_c = pseudos[0].r_c if r_c is None else r_c
    d = max(p.d for p in pseudos)

    def gram(refine):
        r, w = radial_nodes(r_c, d, refine)
        pv = np.array([p.inner(r) for p in pseudos])
        return _weighted_gram(chi_scale * bump(r / r_c) * pv, pv, r, w, l)

    current = gram(0)
    for refine in range(max_refine + 1):
        cond = float(np.linalg.cond(current))
        if not np.isfinite(cond) or cond > GRAM_CONDITION_LIMIT:
            raise DatasetError(
                f"projector Gram matrix for l={l} is numerically singular "
                f"(condition number {cond:.3e}); pseudo functions are not independent")
        finer = gram(refine + 1)
        if np.max(np.abs(finer - current)) <= 1e-13 * np.max(np.abs(current)):
            coeffs = np.linalg.inv(finer)
            break
        current = finer
    else:
        raise DatasetError("projector quadrature did not converge under node doubling")
    return ProjectorSet(pseudos, coeffs, r_c, chi_scale, float(cond))


# ---------------------------------------------------------------------------
# Datasets


@dataclass(frozen=True, eq=False)
class PawChannel:
    atomic: ExpPolyRadial
    pseudo: PseudoRadial
    projector_row: np.ndarray | None
    projector_set: ProjectorSet | None

    @property
    def n(self) -> int:
        return self.atomic.n

    @property
    def l(self) -> int:
        return self.atomic.l

    @property
    def epsilon(self) -> float:
        return self.atomic.epsilon

    @property
    def label(self) -> str:
        return f"{self.n}{'spdf'[self.l]}"

    def projector(self, r):
        """Projector radial function (``r^l`` removed)."""
        if self.projector_set is None:
            raise DatasetError("projectors are unavailable for this dataset")
        r = np.asarray(r, dtype=float)
        inner = np.array([p.inner(r) for p in self.projector_set.pseudos])
        return np.tensordot(self.projector_row, inner, axes=1) * self.projector_set.chi(r)

    def difference(self, r):
        """``u - u~`` (zero outside the ball)."""
        r = np.asarray(r, dtype=float)
        return np.where(r < self.pseudo.r_c, self.atomic(r) - self.pseudo.inner(r), 0.0)

    def radial_operator_difference(self, r):
        """Radial Hamiltonian (nuclear well only) applied to ``u - u~`` inside the ball."""
        r = np.asarray(r, dtype=float)
        inside = np.where(r < self.pseudo.r_c, r, 0.5 * self.pseudo.r_c)
        val = self.epsilon * self.atomic(inside) - self.pseudo.radial_operator_inner(inside)
        return np.where(r < self.pseudo.r_c, val, 0.0)


@dataclass(frozen=True, eq=False)
class PawDataset:
    """PAW functions of one species: atomic, pseudo and projector per channel."""

    Z: float
    r_c: float
    d: int
    channels: tuple[PawChannel, ...]
    name: str = "custom"
    build_error: str | None = None

    @property
    def n_paw(self) -> int:
        return sum(2 * c.l + 1 for c in self.channels)

    @property
    def counts(self) -> tuple[int, ...]:
        lmax = max(c.l for c in self.channels)
        return tuple(sum(1 for c in self.channels if c.l == l) for l in range(lmax + 1))

    def by_l(self) -> dict[int, list[int]]:
        groups: dict[int, list[int]] = {}
        for i, c in enumerate(self.channels):
            groups.setdefault(c.l, []).append(i)
        return groups

    def functions(self):
        """Flattened ``(channel, m)`` list in the order used by the operator."""
        return [(c, m) for c in self.channels for m in range(-c.l, c.l + 1)]


def _assemble(Z, r_c, d, atomics, pseudos, name, strict, chi_scale=1.0):
    rows: list = [None] * len(atomics)
    sets: list = [None] * len(atomics)
    error = None
    groups: dict[int, list[int]] = {}
    for i, a in enumerate(atomics):
        groups.setdefault(a.l, []).append(i)
    try:
        for l, idx in groups.items():
            ps = build_projectors([pseudos[i] for i in idx], r_c, chi_scale)
            for row, i in enumerate(idx):
                rows[i] = ps.coeffs[row]
                sets[i] = ps
    except DatasetError as exc:
        if strict:
            raise
        error = str(exc)
        rows = [None] * len(atomics)
        sets = [None] * len(atomics)
    channels = tuple(PawChannel(a, p, r, s) for a, p, r, s in zip(atomics, pseudos, rows, sets))
    return PawDataset(float(Z), float(r_c), int(d), channels, name, error)


def build_dataset(Z: float, r_c: float, d: int = 5, channels: Sequence[tuple[int, int]] = ((1, 0),),
                  name: str = "custom", strict: bool = True) -> PawDataset:
    """Build a hydrogenoid dataset from ``(n, l)`` channel labels.

    With ``strict=False`` a failing projector construction is recorded on the
    dataset instead of raised, so that :func:`validate_dataset` can report it.
    """
    if not channels:
        raise ValueError("a dataset needs at least one channel")
    atomics = [hydrogenoid(n, l, Z) for n, l in channels]
    return dataset_from_atomics(Z, r_c, d, atomics, name, strict)


def dataset_from_atomics(Z: float, r_c: float, d: int, atomics: Sequence[ExpPolyRadial],
                         name: str = "custom", strict: bool = True,
                         chi_scale: float = 1.0) -> PawDataset:
    """Dataset from arbitrary atomic radial functions (each needs ``l``, ``n`` and ``epsilon``)."""
    pseudos = [build_pseudo(a, r_c, d) for a in atomics]
    return _assemble(Z, r_c, d, list(atomics), pseudos, name, strict, chi_scale)


PRESETS = {
    "1s": ((1, 0),),
    "2s": ((1, 0), (2, 0)),
    "2s1p": ((1, 0), (2, 0), (2, 1)),
}


def preset_dataset(name: str, Z: float = 3.0, r_c: float = 0.5, d: int = 5) -> PawDataset:
    if name not in PRESETS:
        raise KeyError(f"unknown dataset preset {name!r}; choose from {sorted(PRESETS)}")
    return build_dataset(Z, r_c, d, PRESETS[name], name=name)


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    derivative_min_singular: float
    derivative_relative_singular: float
    overlap_condition: float
    min_origin_value: float
    duality_residual: float
    gram_condition: float
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        return [
            f"independence (min singular value of derivative matrix): "
            f"{self.derivative_min_singular:.6e} (relative {self.derivative_relative_singular:.3e})",
            f"projector/atomic overlap condition number: {self.overlap_condition:.6e}",
            f"min |u(0)| over channels: {self.min_origin_value:.6e}",
            f"duality residual: {self.duality_residual:.3e}",
            f"max Gram condition number: {self.gram_condition:.3e}",
            "status: " + ("ok" if self.ok else "FAILED: " + "; ".join(self.failures)),
        ]


def duality_matrix(dataset: PawDataset, l: int, refine: int = 1) -> np.ndarray:
    """``<p_i, u~_j>`` over one angular channel on a rule finer than the build rule."""
    idx = dataset.by_l()[l]
    r, w = radial_nodes(dataset.r_c, dataset.d, refine)
    pv = np.array([dataset.channels[i].projector(r) for i in idx])
    uv = np.array([dataset.channels[i].pseudo.inner(r) for i in idx])
    return _weighted_gram(pv, uv, r, w, l)


def validate_dataset(dataset: PawDataset, tol_duality: float = 1e-10,
                     independence_tol: float = 1e-12, overlap_limit: float = 1e12) -> ValidationReport:
    failures: list[str] = []
    smin, srel = math.inf, math.inf
    for l, idx in dataset.by_l().items():
        mat = np.array([[float(dataset.channels[i].atomic.derivative(dataset.r_c, k))
                         * dataset.r_c**k for i in idx] for k in range(len(idx))])
        sv = np.linalg.svd(mat, compute_uv=False)
        smin = min(smin, float(sv[-1]))
        srel = min(srel, float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0)
    if srel < independence_tol:
        failures.append("atomic functions are not independent at the cut-off radius")

    origin = min(abs(float(c.atomic(0.0))) for c in dataset.channels)
    if not origin > 0:
        failures.append("an atomic channel vanishes at the nucleus")

    cond_a, dual, gram_cond = math.inf, math.inf, math.inf
    if dataset.build_error is not None:
        failures.append(f"projectors unavailable: {dataset.build_error}")
    else:
        cond_a, dual, gram_cond = 0.0, 0.0, 0.0
        for l, idx in dataset.by_l().items():
            r, w = radial_nodes(dataset.r_c, dataset.d, 1)
            pv = np.array([dataset.channels[i].projector(r) for i in idx])
            av = np.array([dataset.channels[i].atomic(r) for i in idx])
            cond_a = max(cond_a, float(np.linalg.cond(_weighted_gram(pv, av, r, w, l))))
            resid = duality_matrix(dataset, l) - np.eye(len(idx))
            dual = max(dual, float(np.max(np.abs(resid))))
            gram_cond = max(gram_cond, dataset.channels[idx[0]].projector_set.gram_condition)
        if not cond_a < overlap_limit:
            failures.append("projector/atomic overlap matrix is not invertible")
        if not dual < tol_duality:
            failures.append(f"duality residual {dual:.3e} above {tol_duality:.1e}")
    return ValidationReport(smin, srel, cond_a, origin, dual, gram_cond, failures)


def kato_recurrence_check(u: ExpPolyRadial, order: int = 4) -> float:
    """Largest relative residual of the Taylor recurrence at the nucleus.

    For an eigenfunction of the hydrogenoid radial operator,
    ``(j+1)(j+2+2l)/2 t_{j+1} = -Z t_j - eps t_{j-1}`` for the Taylor
    coefficients ``t`` of ``u``.
    """
    t = u.taylor(order + 1)
    worst = 0.0
    for j in range(order + 1):
        prev = t[j - 1] if j >= 1 else 0.0
        res = (j + 1) * (j + 2 + 2 * u.l) / 2 * t[j + 1] + u.Z * t[j] + u.epsilon * prev
        ref = max(abs((j + 1) * (j + 2 + 2 * u.l) / 2 * t[j + 1]), abs(u.Z * t[j]),
                  abs(u.epsilon * prev))
        worst = max(worst, abs(res) / max(ref, 1e-300))
    return worst


# ---------------------------------------------------------------------------
# File format


def _document(ds: PawDataset) -> dict:
    if ds.build_error is not None:
        raise DatasetError("cannot save a dataset without projectors")
    chans = []
    for c in ds.channels:
        chans.append({
            "n": c.n,
            "l": c.l,
            "atomic": {"type": "hydrogenoid", "n": c.n, "l": c.l, "Z": c.atomic.Z},
            "pseudo_coeffs": [float(x) for x in c.pseudo.coeffs],
            "projector_coeffs": [float(x) for x in c.projector_row],
            "epsilon": float(c.epsilon),
        })
    return {
        "format_version": FORMAT_VERSION,
        "name": ds.name,
        "Z": float(ds.Z),
        "r_c": float(ds.r_c),
        "d": int(ds.d),
        "chi": {"shape": "exp-bump", "scale": float(ds.channels[0].projector_set.chi_scale)},
        "channels": chans,
    }


def _canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dumps_dataset(ds: PawDataset) -> str:
    doc = _document(ds)
    doc["checksum"] = hashlib.sha256(_canonical(doc).encode()).hexdigest()
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_dataset(ds: PawDataset, path) -> Path:
    path = Path(path)
    path.write_text(dumps_dataset(ds))
    return path


def loads_dataset(text: str) -> PawDataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"dataset file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "checksum" not in doc:
        raise DatasetFormatError("dataset file has no checksum")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset format version {version!r}")
    checksum = doc.pop("checksum")
    if hashlib.sha256(_canonical(doc).encode()).hexdigest() != checksum:
        raise DatasetFormatError("dataset checksum mismatch")
    try:
        Z, r_c, d = float(doc["Z"]), float(doc["r_c"]), int(doc["d"])
        chi_scale = float(doc["chi"]["scale"])
        atomics, pseudos, rows = [], [], []
        for ch in doc["channels"]:
            spec = ch["atomic"]
            if spec["type"] != "hydrogenoid":
                raise DatasetFormatError(f"unknown atomic function type {spec['type']!r}")
            a = hydrogenoid(int(spec["n"]), int(spec["l"]), float(spec["Z"]))
            atomics.append(a)
            pseudos.append(PseudoRadial(a, r_c, np.array(ch["pseudo_coeffs"], dtype=float)))
            rows.append(np.array(ch["projector_coeffs"], dtype=float))
    except (KeyError, TypeError) as exc:
        raise DatasetFormatError(f"dataset file is missing a field: {exc}") from exc

    groups: dict[int, list[int]] = {}
    for i, a in enumerate(atomics):
        groups.setdefault(a.l, []).append(i)
    sets: list = [None] * len(atomics)
    for l, idx in groups.items():
        coeffs = np.array([rows[i] for i in idx])
        ps = ProjectorSet(tuple(pseudos[i] for i in idx), coeffs, r_c, chi_scale,
                          float(np.linalg.cond(np.linalg.inv(coeffs))))
        for i in idx:
            sets[i] = ps
    channels = tuple(PawChannel(a, p, r, s) for a, p, r, s in zip(atomics, pseudos, rows, sets))
    return PawDataset(Z, r_c, d, channels, str(doc.get("name", "custom")))


def load_dataset(path) -> PawDataset:
    return loads_dataset(Path(path).read_text())
