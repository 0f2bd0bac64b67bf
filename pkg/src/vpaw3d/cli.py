"""Command-line front end: datasets, single solves and cutoff studies.

Every study command reads a JSON configuration (``--config``) or a named
preset (``--preset``), runs the solves and writes one CSV row per solve.
Exit codes: 0 success, 1 configuration error, 2 dataset validation
failure, 3 eigensolver non-convergence, 4 numerical guard.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .atomic import (PRESETS, DatasetError, PawDataset, build_dataset, kato_recurrence_check,
                     load_dataset, save_dataset, validate_dataset)
from .diagnostics import bessel_asymptotics_probe, fit_slope
from .potential import CosineTerm, NuclearConfiguration, SingularPointError
from .pwbasis import UnitCell, build_basis, transfer_coefficients
from .solver import SolverError, kinetic_preconditioner, lowest_eigenpairs, operator_pair
from .specialfn import QuadratureError
from .vpaw import AssemblyError, assemble

__all__ = ["ConfigError", "NumericGuardError", "NonConvergenceError", "StudyConfig", "Series",
           "StudyRecord", "EnergySolver", "SolveOutcome", "emit_csv", "load_config",
           "preset_config", "run_converge", "run_rc_scan", "main", "CSV_HEADER"]

log = logging.getLogger(__name__)

CSV_HEADER = ("method", "dataset", "M", "r_c", "E_M", "E_ref", "abs_err", "iters", "wall_ms")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NOT_CONVERGED, EXIT_NUMERIC = range(5)


class ConfigError(ValueError):
    """The study configuration is malformed or inconsistent."""


class NumericGuardError(RuntimeError):
    """A result violates a numerical sanity bound."""


class NonConvergenceError(RuntimeError):
    """The eigensolver stopped before reaching the residual tolerance."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Series:
    """One convergence curve: a method, a dataset (``none`` for direct) and a radius."""

    method: str
    dataset: str = "none"
    r_c: float | None = None

    @property
    def label(self) -> str:
        return "direct" if self.method == "direct" else f"vpaw-{self.dataset}"


@dataclass
class StudyConfig:
    L: float = 5.0
    nuclei: list = field(default_factory=lambda: [[3.0, [0.5, 0.0, 0.0]], [3.0, [-0.5, 0.0, 0.0]]])
    smooth_terms: list = field(default_factory=list)
    method: str = "vpaw"
    dataset: str = "2s"
    r_c: float = 0.5
    d: int = 5
    M: list = field(default_factory=lambda: [9, 12, 15, 20])
    M_ref: int = 40
    ref_dataset: str = "2s"
    ref_r_c: float | None = None
    series: list = field(default_factory=list)
    r_c_list: list = field(default_factory=list)
    slope_windows: list = field(default_factory=list)
    n_bands: int = 1
    tol: float = 1e-5
    max_iter: int = 300
    seed: int = 0
    oversample: float = 2.0
    representation: str = "real"
    output: str | None = None

    # -- derived ----------------------------------------------------------
    def nuclear_configuration(self) -> NuclearConfiguration:
        charges = [float(z) for z, _ in self.nuclei]
        positions = np.array([p for _, p in self.nuclei], dtype=float).reshape(-1, 3)
        terms = tuple(CosineTerm(tuple(int(v) for v in t["k"]), float(t["amplitude"]))
                      for t in self.smooth_terms)
        return NuclearConfiguration(UnitCell(float(self.L)), np.array(charges), positions, terms)

    def all_series(self) -> list[Series]:
        if not self.series:
            ds = "none" if self.method == "direct" else self.dataset
            return [Series(self.method, ds, None if self.method == "direct" else self.r_c)]
        out = []
        for entry in self.series:
            method = entry.get("method", self.method)
            ds = "none" if method == "direct" else entry.get("dataset", self.dataset)
            r_c = None if method == "direct" else float(entry.get("r_c", self.r_c))
            out.append(Series(method, ds, r_c))
        return out

    def reference_series(self) -> Series:
        return Series("vpaw", self.ref_dataset,
                      float(self.ref_r_c if self.ref_r_c is not None else self.r_c))

    def to_json(self) -> str:
        """Canonical JSON of every field that affects results (the output path does not)."""
        doc = dataclasses.asdict(self)
        doc.pop("output")
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    # -- checks -----------------------------------------------------------
    def validate(self, command: str = "converge") -> None:
        """Raise :class:`ConfigError` for anything that would make the study meaningless."""
        if not (isinstance(self.L, (int, float)) and self.L > 0):
            raise ConfigError("L must be a positive number")
        try:
            config = self.nuclear_configuration()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad nuclei or smooth_terms: {exc}") from exc
        if self.method not in ("direct", "vpaw"):
            raise ConfigError(f"method must be 'direct' or 'vpaw', got {self.method!r}")
        if self.representation not in ("real", "complex"):
            raise ConfigError("representation must be 'real' or 'complex'")
        ms = list(self.M)
        if command in ("converge", "rc-scan", "solve") and not ms:
            raise ConfigError("the M list is empty")
        if any(not isinstance(m, int) or m < 0 for m in ms):
            raise ConfigError("every M must be a non-negative integer")
        if self.n_bands < 1 or self.max_iter < 1 or not self.tol > 0:
            raise ConfigError("n_bands, max_iter and tol must be positive")
        if self.oversample < 1:
            raise ConfigError("oversample must be at least 1")
        if self.d < 2:
            raise ConfigError("d must be at least 2")
        radii = [s.r_c for s in self.all_series() if s.r_c is not None]
        if command == "rc-scan":
            if not self.r_c_list:
                raise ConfigError("rc-scan needs a non-empty r_c_list")
            radii += [float(r) for r in self.r_c_list]
        if command in ("converge", "rc-scan"):
            if self.M_ref < 1.5 * max(ms):
                raise ConfigError(f"M_ref={self.M_ref} must be at least 1.5 x max(M)={max(ms)}")
            radii.append(self.reference_series().r_c)
        half = 0.5 * config.min_distance()
        for r in radii:
            # touching balls (r_c equal to half the distance) are allowed
            if not (0 < r <= half * (1 + 1e-12)) or r >= 0.5 * self.L:
                raise ConfigError(f"r_c={r} must lie in (0, {min(half, 0.5 * self.L):g}]")
        for s in self.all_series():
            if s.method not in ("direct", "vpaw"):
                raise ConfigError(f"unknown method {s.method!r} in series")
            if s.method == "vpaw" and s.dataset not in PRESETS and not Path(s.dataset).is_file():
                raise ConfigError(f"dataset {s.dataset!r} is neither a preset nor a file")


_FIELDS = {f.name for f in dataclasses.fields(StudyConfig)}


def config_from_dict(doc: dict, base: StudyConfig | None = None) -> StudyConfig:
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return dataclasses.replace(base or StudyConfig(), **doc)


def load_config(path) -> StudyConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    return config_from_dict(doc)


_DESK_M = [9, 12, 15, 20, 25, 30, 40]


def preset_config(name: str) -> StudyConfig:
    """Built-in lithium-dimer studies with cutoff lists sized for a desktop."""
    if name == "paper-fig1":
        return StudyConfig(M=list(_DESK_M), M_ref=80, series=[
            {"method": "direct"}, {"dataset": "1s"}, {"dataset": "2s"}, {"dataset": "2s1p"}],
            slope_windows=[[15, 20, 25, 30, 40], [9, 12, 15, 20]])
    if name == "paper-fig2":
        return StudyConfig(M=list(_DESK_M), M_ref=80, series=[
            {"dataset": "1s", "r_c": r} for r in (0.2, 0.3, 0.4, 0.5)],
            slope_windows=[[9, 12, 15, 20], [20, 25, 30, 40]])
    if name == "paper-fig3":
        return StudyConfig(M=[9, 28], M_ref=80, dataset="1s",
                           r_c_list=[0.15, 0.2, 0.3, 0.4, 0.5])
    raise ConfigError(f"unknown preset {name!r}; choose paper-fig1, paper-fig2 or paper-fig3")


# ---------------------------------------------------------------------------
# solving


@dataclass
class SolveOutcome:
    energy: float
    residual: float
    iterations: int
    converged: bool
    wall: float
    matvecs: int
    vector: np.ndarray = field(repr=False)


class EnergySolver:
    """Lowest eigenvalue for (method, dataset, M, r_c) with caching and warm starts.

    Datasets are built once per (name, Z, r_c, d). A solve at cutoff ``M``
    starts from the converged vector of the nearest smaller cutoff of the
    same series, zero-padded onto the larger basis.
    """

    def __init__(self, config: StudyConfig, workers: int = 1):
        self.config = config
        self.nuclei = config.nuclear_configuration()
        self.workers = workers
        self._datasets: dict = {}
        self._results: dict = {}

    def dataset(self, name: str, Z: float, r_c: float) -> PawDataset:
        key = (name, float(Z), float(r_c), self.config.d)
        if key not in self._datasets:
            if name in PRESETS:
                ds = build_dataset(Z, r_c, self.config.d, PRESETS[name], name=name)
            else:
                ds = load_dataset(name)
                if not math.isclose(ds.Z, Z):
                    raise ConfigError(f"dataset file {name} is for Z={ds.Z}, nucleus has Z={Z}")
            self._datasets[key] = ds
        return self._datasets[key]

    def _site_datasets(self, series: Series):
        if series.method == "direct":
            return None
        return [self.dataset(series.dataset, z, series.r_c) for z in self.nuclei.charges]

    def solve(self, series: Series, M: int) -> SolveOutcome:
        key = (series, M)
        if key in self._results:
            return self._results[key]
        cfg = self.config
        start = time.perf_counter()
        basis = build_basis(cfg.L, M, workers=self.workers)
        op = assemble(basis, self.nuclei, self._site_datasets(series),
                      oversample=cfg.oversample, representation=cfg.representation)
        A, B = operator_pair(op, series.method)
        x0 = self._warm_start(series, M, basis)
        res = lowest_eigenpairs(A, B, cfg.n_bands, dim=op.dim, dtype=op.dtype, tol=cfg.tol,
                                max_iter=cfg.max_iter, seed=cfg.seed, x0=x0,
                                preconditioner=kinetic_preconditioner(op.kinetic),
                                label=f"{series.label} M={M}")
        wall = time.perf_counter() - start
        energy = float(res.eigenvalues[0])
        if not math.isfinite(energy):
            raise NumericGuardError(f"non-finite eigenvalue for {series.label} at M={M}")
        outcome = SolveOutcome(energy, float(res.residual_norms[0]), res.iterations,
                               res.converged, wall, res.matvecs, res.vectors[:, :cfg.n_bands])
        self._results[key] = outcome
        return outcome

    def _warm_start(self, series, M, basis):
        done = [m for (s, m) in self._results if s == series and m < M]
        if not done:
            return None
        m = max(done)
        source = build_basis(self.config.L, m)
        return transfer_coefficients(self._results[(series, m)].vector, source, basis,
                                     real=self.config.representation == "real")


# ---------------------------------------------------------------------------
# records and CSV


@dataclass
class StudyRecord:
    method: str
    dataset: str
    M: int
    r_c: float
    E_M: float
    E_ref: float
    iters: int
    wall_ms: float
    matvecs: int = 0

    @property
    def abs_err(self) -> float:
        return abs(self.E_M - self.E_ref)

    def row(self) -> list[str]:
        return [self.method, self.dataset, str(self.M), repr(float(self.r_c)), repr(self.E_M),
                repr(self.E_ref), repr(self.abs_err), str(self.iters), repr(float(self.wall_ms))]


def emit_csv(records: Sequence[StudyRecord], path=None, config: StudyConfig | None = None) -> str:
    """Serialize records (sorted by M, then r_c) and optionally write them to ``path``.

    With ``config`` the effective configuration is echoed in a leading
    ``# config:`` comment line.
    """
    if not records:
        raise ValueError("no records to write")
    for rec in records:
        if not (math.isfinite(rec.E_M) and math.isfinite(rec.E_ref)):
            raise ValueError(f"record {rec.method}/{rec.dataset} M={rec.M} has a non-finite energy")
    ordered = sorted(records, key=lambda r: (r.M, r.r_c, r.method, r.dataset))
    buf = io.StringIO()
    if config is not None:
        buf.write(f"# config: {config.to_json()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in ordered:
        writer.writerow(rec.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path) -> tuple[dict | None, list[dict]]:
    """Parse a study CSV back into its echoed configuration and rows."""
    lines = Path(path).read_text().splitlines()
    config = None
    if lines and lines[0].startswith("# config: "):
        config = json.loads(lines.pop(0)[len("# config: "):])
    return config, list(csv.DictReader(lines))


# ---------------------------------------------------------------------------
# studies


def _record(series: Series, M, outcome, E_ref, deterministic):
    return StudyRecord(series.method, series.dataset, M,
                       float(series.r_c) if series.r_c is not None else 0.0,
                       outcome.energy, E_ref, outcome.iterations,
                       0.0 if deterministic else round(outcome.wall * 1e3, 3), outcome.matvecs)


def _check_outcome(series, M, outcome, E_ref, tol):
    if not outcome.converged:
        raise NonConvergenceError(
            f"{series.label} at M={M}: residual {outcome.residual:.3e} after {outcome.iterations} iterations")
    if E_ref is not None and series.method == "direct" and outcome.energy < E_ref - 2 * tol:
        raise NumericGuardError(
            f"direct energy {outcome.energy!r} at M={M} lies below the reference {E_ref!r}")


def reference_energy(config: StudyConfig, solver: EnergySolver) -> float:
    ref = config.reference_series()
    outcome = solver.solve(ref, config.M_ref)
    _check_outcome(ref, config.M_ref, outcome, None, config.tol)
    return outcome.energy


def run_converge(config: StudyConfig, solver: EnergySolver | None = None,
                 deterministic: bool = False) -> list[StudyRecord]:
    config.validate("converge")
    solver = solver or EnergySolver(config)
    runs = [(s, M, solver.solve(s, M)) for s in config.all_series() for M in sorted(config.M)]
    E_ref = reference_energy(config, solver)
    records = []
    for series, M, outcome in runs:
        _check_outcome(series, M, outcome, E_ref, config.tol)
        records.append(_record(series, M, outcome, E_ref, deterministic))
    return records


def run_rc_scan(config: StudyConfig, solver: EnergySolver | None = None,
                deterministic: bool = False) -> list[StudyRecord]:
    config.validate("rc-scan")
    solver = solver or EnergySolver(config)
    E_ref = reference_energy(config, solver)
    records = []
    for M in sorted(config.M):
        for r_c in sorted(float(r) for r in config.r_c_list):
            series = Series("vpaw", config.dataset, r_c)
            outcome = solver.solve(series, M)
            _check_outcome(series, M, outcome, E_ref, config.tol)
            records.append(_record(series, M, outcome, E_ref, deterministic))
    return records


def _slope_lines(records, key, windows, groups):
    lines = []
    for group, recs in groups.items():
        xs = [key(r) for r in recs]
        ys = [r.abs_err for r in recs]
        for window in windows or [xs]:
            sel = [(x, y) for x, y in zip(xs, ys) if any(math.isclose(x, w) for w in window)]
            if len(sel) < 3 or any(y <= 0 for _, y in sel):
                continue
            fit = fit_slope(*zip(*sel))
            lines.append(f"slope {group} over {[x for x, _ in sel]}: {fit.exponent:.4f}")
    return lines


# ---------------------------------------------------------------------------
# command line


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with study configuration fields")
    common.add_argument("--preset", help="paper-fig1, paper-fig2 or paper-fig3")
    common.add_argument("--out", help="output path (CSV for studies, JSON for gen-paw)")
    common.add_argument("--deterministic", action="store_true",
                        help="zero the wall-time column so reruns are byte-identical")
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    common.add_argument("--method", choices=("direct", "vpaw"))
    common.add_argument("--dataset", help="preset dataset (1s, 2s, 2s1p) or dataset file")
    common.add_argument("--r-c", dest="r_c", type=float)
    common.add_argument("-M", dest="M", type=int, nargs="+", help="plane-wave cutoffs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vpaw3d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-paw", parents=[common], help="build, validate and save a PAW dataset")
    sub.add_parser("solve", parents=[common], help="lowest eigenvalue at one cutoff")
    sub.add_parser("converge", parents=[common], help="error versus cutoff study")
    sub.add_parser("rc-scan", parents=[common], help="error versus augmentation radius")
    sub.add_parser("validate", parents=[common], help="check a PAW dataset")
    probe = sub.add_parser("bessel-probe", parents=[common],
                           help="decay of smoothly truncated Bessel moments")
    probe.add_argument("--j", type=int, nargs="+", default=[0, 1, 2, 3])
    probe.add_argument("--l", type=int, nargs="+", default=[0, 1])
    probe.add_argument("--kr", type=float, nargs=2, default=[50.0, 400.0],
                       help="range of K r_c")
    probe.add_argument("--points", type=int, default=12)
    return parser


def _effective_config(args) -> StudyConfig:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    if args.config:
        config = load_config(args.config)
    elif args.preset:
        config = preset_config(args.preset)
    else:
        config = StudyConfig()
    overrides = {k: getattr(args, k) for k in ("method", "dataset", "r_c", "M")
                 if getattr(args, k, None) is not None}
    if overrides:
        config = dataclasses.replace(config, **overrides)
    if args.out:
        config = dataclasses.replace(config, output=args.out)
    return config


def _cmd_gen_paw(config: StudyConfig, args) -> int:
    config.validate("gen-paw")
    if config.dataset not in PRESETS:
        raise ConfigError(f"gen-paw needs a preset dataset name, got {config.dataset!r}")
    Z = float(config.nuclei[0][0]) if config.nuclei else 3.0
    ds = build_dataset(Z, config.r_c, config.d, PRESETS[config.dataset], name=config.dataset)
    report = validate_dataset(ds)
    for line in report.lines():
        print(line)
    if not report.ok:
        return EXIT_VALIDATION
    out = config.output or f"paw-{config.dataset}-Z{Z:g}-rc{config.r_c:g}.json"
    save_dataset(ds, out)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_validate(config: StudyConfig, args) -> int:
    config.validate("validate")
    solver = EnergySolver(config)
    ok = True
    for Z in sorted(set(float(z) for z, _ in config.nuclei)) or [3.0]:
        ds = solver.dataset(config.dataset, Z, config.r_c)
        report = validate_dataset(ds)
        print(f"dataset {ds.name} Z={ds.Z:g} r_c={ds.r_c:g} d={ds.d}")
        for line in report.lines():
            print("  " + line)
        for ch in ds.channels:
            resid = kato_recurrence_check(ch.atomic, 4)
            passed = resid < 1e-10
            print(f"  kato recurrence {ch.label}: {resid:.3e} {'ok' if passed else 'FAIL'}")
            ok &= passed
        ok &= report.ok
    return EXIT_OK if ok else EXIT_VALIDATION


def _cmd_solve(config: StudyConfig, args) -> int:
    config.validate("solve")
    solver = EnergySolver(config, workers=args.threads)
    series = config.all_series()[0]
    for M in config.M:
        out = solver.solve(series, M)
        print(f"{series.label} M={M} E={out.energy!r} residual={out.residual:.3e} "
              f"iterations={out.iterations}")
        if not out.converged:
            return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_study(config: StudyConfig, args, command) -> int:
    solver = EnergySolver(config, workers=args.threads)
    if command == "converge":
        records = run_converge(config, solver, args.deterministic)
        groups: dict = {}
        for r in records:
            groups.setdefault(f"{r.method}/{r.dataset}/r_c={r.r_c:g}", []).append(r)
        lines = _slope_lines(records, lambda r: r.M, config.slope_windows, groups)
    else:
        records = run_rc_scan(config, solver, args.deterministic)
        groups = {}
        for r in records:
            groups.setdefault(f"M={r.M}", []).append(r)
        lines = _slope_lines(records, lambda r: r.r_c, None, groups)
    text = emit_csv(records, config.output, config)
    if config.output is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {config.output}")
    for line in lines:
        print(line)
    return EXIT_OK


def _cmd_probe(config: StudyConfig, args) -> int:
    r_c = config.r_c
    ks = np.geomspace(args.kr[0], args.kr[1], args.points) / r_c
    print("j,l,parity,exponent,expected,decay_ratio,scaled_tail")
    for j in args.j:
        for l in args.l:
            p = bessel_asymptotics_probe(j, l, r_c, ks)
            exponent = p.fit.exponent if p.fit else math.nan
            print(f"{j},{l},{'surviving' if p.surviving else 'vanishing'},{exponent:.4f},"
                  f"{-(j + 3)},{p.decay_ratio:.3e},{p.scaled_tail:.3e}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = _effective_config(args)
        if args.command == "gen-paw":
            return _cmd_gen_paw(config, args)
        if args.command == "validate":
            return _cmd_validate(config, args)
        if args.command == "solve":
            return _cmd_solve(config, args)
        if args.command in ("converge", "rc-scan"):
            return _cmd_study(config, args, args.command)
        return _cmd_probe(config, args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, AssemblyError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (NumericGuardError, SolverError, QuadratureError, SingularPointError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
