"""Experiment harness behind the command line.

Config files are line oriented::

    # comment
    target = u1
    algorithm = both          # alg1 | alg2 | both
    stop = max_iterations     # indicator_zero | max_iterations | error_below | max_leaves
    stop_value = 2000
    quadrature = adaptive     # adaptive | plain
    tol = 1e-9
    stride = 10
    outdir = out
    oracle_depth = 8
    oracle_cap = 1000000
    iteration_cap = 1000000

Every key is optional; unknown keys are an error.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import meshio
from .error import H1Error, get_target, local_error_h1, target_xsq
from .indicators import (ENGINES, IterationCapExceeded, RunTrace, StoppingRule,
                         read_trace_csv, run)
from .nvb import NVBBackend, build_domain_mesh
from .oracle import (CertificationReport, SearchCapExceeded, certify_near_best,
                     sigma_table)
from .quadrature import conical_rule, validate_rule

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_CAP = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    target: str = "u1"
    algorithm: str = "both"
    stop: str = "max_iterations"
    stop_value: float = 2000
    quadrature: str = "adaptive"
    tol: float = 1e-9
    stride: int = 10
    outdir: str = "out"
    oracle_depth: int = 8
    oracle_cap: int = 10**6
    iteration_cap: int = 10**6

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ("alg1", "alg2", "both"):
            raise ConfigError(f"algorithm must be alg1, alg2 or both, not {self.algorithm!r}")
        if self.stop not in StoppingRule.KINDS:
            raise ConfigError(f"stop must be one of {StoppingRule.KINDS}, not {self.stop!r}")
        if self.quadrature not in ("adaptive", "plain"):
            raise ConfigError(f"quadrature must be adaptive or plain, not {self.quadrature!r}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.oracle_depth < 0 or self.oracle_cap < 1 or self.iteration_cap < 0:
            raise ConfigError("oracle_depth, oracle_cap and iteration_cap must be nonnegative")
        if self.stop_value < 0:
            raise ConfigError("stop_value must be nonnegative")
        try:
            get_target(self.target)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_mapping(cls, items: dict[str, str | int | float]) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, raw in items.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kind = types[key]
            try:
                if kind == "int":
                    kw[key] = int(float(raw)) if isinstance(raw, str) else int(raw)
                elif kind == "float":
                    kw[key] = float(raw)
                else:
                    kw[key] = str(raw)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return cls(**kw)

    def replace(self, **changes) -> "ExperimentConfig":
        return self.from_mapping({**dataclasses.asdict(self), **changes})

    @property
    def algorithms(self) -> tuple[str, ...]:
        return ("alg1", "alg2") if self.algorithm == "both" else (self.algorithm,)

    @property
    def stopping_rule(self) -> StoppingRule:
        return StoppingRule(self.stop, self.stop_value)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    items = {}
    if path is not None:
        items.update(parse_config_text(Path(path).read_text()))
    items.update(overrides or {})
    return ExperimentConfig.from_mapping(items)


# -- problems ----------------------------------------------------------------

@dataclass
class Problem:
    target: object
    backend: NVBBackend
    err: H1Error


def make_problem(config: ExperimentConfig) -> Problem:
    target = get_target(config.target)
    backend = NVBBackend(build_domain_mesh(target.domain))
    err = H1Error(target, backend, tol=config.tol, adaptive=config.quadrature == "adaptive")
    return Problem(target, backend, err)


@dataclass
class RunResult:
    algorithm: str
    tree: object
    trace: RunTrace
    partial: bool = False


def run_experiment(config: ExperimentConfig, algorithm: str,
                   problem: Problem | None = None, stop: StoppingRule | None = None) -> RunResult:
    problem = problem or make_problem(config)
    engine = ENGINES[algorithm](problem.backend, problem.err)
    try:
        tree, trace = run(engine, stop or config.stopping_rule, iteration_cap=config.iteration_cap)
        return RunResult(algorithm, tree, trace)
    except IterationCapExceeded as exc:
        log.warning("%s: %s", algorithm, exc)
        return RunResult(algorithm, exc.tree, exc.trace, partial=True)


def convergence_rows(trace: RunTrace, stride: int = 10) -> list[tuple[int, float]]:
    """(cardinality, sqrt(Err)) at every ``stride``-th iteration and at the end."""
    recs = [r for r in trace.records if r.n % stride == 0]
    if recs[-1].n != trace.final.n:
        recs.append(trace.final)
    return [(r.leaves, math.sqrt(r.err_global)) for r in recs]


def write_convergence(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("cards,err_sqrt\n")
        for cards, e in rows:
            fh.write(f"{cards},{e:.17g}\n")


def read_convergence(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def cmd_run(config: ExperimentConfig) -> tuple[dict[str, dict[str, Path]], int]:
    """Run the configured algorithms; returns written files per algorithm and an exit code."""
    out = Path(config.outdir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    code = EXIT_OK
    for alg in config.algorithms:
        res = run_experiment(config, alg)
        stem = out / f"{config.target}_{alg}"
        paths = {
            "trace": stem.with_name(stem.name + "_trace.csv"),
            "convergence": stem.with_name(stem.name + "_convergence.csv"),
            "mesh": stem.with_name(stem.name + "_mesh.txt"),
            "patches": stem.with_name(stem.name + "_patches.txt"),
        }
        res.trace.write_csv(paths["trace"])
        write_convergence(convergence_rows(res.trace, config.stride), paths["convergence"])
        meshio.write_mesh(res.tree, paths["mesh"])
        meshio.write_patches(res.tree, paths["patches"])
        flag = stem.with_name(stem.name + "_PARTIAL")
        if res.partial:
            flag.write_text(f"iteration cap {config.iteration_cap} reached before "
                            f"stop rule {config.stop} {config.stop_value:g}\n")
            paths["partial"] = flag
            code = EXIT_CAP
        elif flag.exists():
            flag.unlink()
        fin = res.trace.final
        print(f"{alg}: n={fin.n} leaves={fin.leaves} Err={fin.err_global:.6e}"
              f"{' (partial)' if res.partial else ''}")
        files[alg] = paths
    return files, code


# -- certification -------------------------------------------------------------

def _table_with_fallback(backend, err, depth, cap):
    """Sigma table to ``depth``, or the deepest one within the cap."""
    try:
        return sigma_table(backend, err, depth, cap), False
    except SearchCapExceeded:
        for d in range(depth - 1, -1, -1):
            try:
                return sigma_table(backend, err, d, cap), True
            except SearchCapExceeded:
                continue
    raise SearchCapExceeded("oracle cap too small for the initial mesh")


def cmd_certify(config: ExperimentConfig, trace_csv=None, write: bool = True
                ) -> tuple[dict[str, CertificationReport], int]:
    """Near-best certification for N <= oracle_depth.

    With ``trace_csv`` the errors of an existing trace are certified instead of
    a fresh run (only ``err_global`` is read).
    """
    problem = make_problem(config)
    backend, err = problem.backend, problem.err
    table, partial = _table_with_fallback(backend, err, config.oracle_depth, config.oracle_cap)
    depth = table.n_max
    P = backend.max_patch_size
    if trace_csv is not None:
        traces = {"trace": read_trace_csv(trace_csv, "trace")}
    else:
        stop = StoppingRule.max_iterations(depth)
        traces = {a: run_experiment(config, a, problem, stop).trace for a in config.algorithms}
    out = Path(config.outdir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / f"{config.target}_sigma.csv")
    reports = {}
    code = EXIT_OK
    for name, trace in traces.items():
        rep = certify_near_best(trace, table, P, N_max=depth)
        reports[name] = rep
        print(f"[{config.target} {name}] P={P} oracle depth {depth}"
              f"{' (PARTIAL: enumeration cap)' if partial else ''}")
        print(rep.text())
        if write:
            rep.write_csv(out / f"{config.target}_{name}_certificate.csv")
            (out / f"{config.target}_{name}_certificate.txt").write_text(rep.text() + "\n")
        if not rep.passed:
            code = EXIT_FAIL
    if partial and code == EXIT_OK:
        code = EXIT_CAP
    return reports, code


# -- slopes --------------------------------------------------------------------

def fit_slope(cards, errs, lo: float = 0.0, hi: float = math.inf, min_points: int = 5) -> float:
    """Least-squares slope of log(err) against log(cards) for lo <= cards <= hi."""
    cards = np.asarray(cards, dtype=float)
    errs = np.asarray(errs, dtype=float)
    keep = (cards >= lo) & (cards <= hi) & (errs > 0)
    if keep.sum() < min_points:
        raise ValueError(f"need at least {min_points} checkpoints in [{lo:g}, {hi:g}], "
                         f"found {int(keep.sum())}")
    slope, _ = np.polyfit(np.log(cards[keep]), np.log(errs[keep]), 1)
    return float(slope)


def cmd_slope(csv_path, lo: float = 0.0, hi: float = math.inf) -> float:
    cards, errs = read_convergence(csv_path)
    return fit_slope(cards, errs, lo, hi)


def matched_fraction(conv_a, conv_b, lo: float, hi: float) -> tuple[float, int]:
    """Share of checkpoints of ``a`` in [lo, hi] where err_a <= err_b.

    ``b`` is interpolated linearly in log-log coordinates at the checkpoint
    cardinalities of ``a`` that fall inside its own range.
    """
    ca, ea = (np.asarray(v, dtype=float) for v in conv_a)
    cb, eb = (np.asarray(v, dtype=float) for v in conv_b)
    order = np.argsort(cb, kind="stable")
    cb, eb = cb[order], eb[order]
    keep = (ca >= max(lo, cb[0])) & (ca <= min(hi, cb[-1]))
    if not keep.any():
        raise ValueError("no overlapping checkpoints")
    eb_at = np.exp(np.interp(np.log(ca[keep]), np.log(cb), np.log(eb)))
    wins = ea[keep] <= eb_at
    return float(wins.mean()), int(keep.sum())


# -- mesh dumps ----------------------------------------------------------------

def cmd_dump_mesh(config: ExperimentConfig, iteration: int, prefix=None) -> tuple[Path, Path]:
    """Mesh and patch-history dumps of T_iteration for a single algorithm."""
    if config.algorithm == "both":
        raise ConfigError("dump-mesh needs a single algorithm (alg1 or alg2)")
    if iteration < 0:
        raise ValueError("iteration must be nonnegative")
    res = run_experiment(config, config.algorithm, stop=StoppingRule.max_iterations(iteration))
    if res.trace.final.n != iteration:
        raise ValueError(f"iteration {iteration} not recorded: run stopped at n={res.trace.final.n}")
    out = Path(config.outdir)
    out.mkdir(parents=True, exist_ok=True)
    stem = prefix or f"{config.target}_{config.algorithm}_n{iteration}"
    mesh_path, patch_path = out / f"{stem}_mesh.txt", out / f"{stem}_patches.txt"
    meshio.write_mesh(res.tree, mesh_path)
    meshio.write_patches(res.tree, patch_path)
    return mesh_path, patch_path


# -- quadrature ----------------------------------------------------------------

def cmd_validate_quadrature(tol: float = 1e-13) -> int:
    rule = conical_rule(17)
    rep = validate_rule(rule, 17, tol)
    print(f"{len(rule.weights)}-point rule, degree {rule.degree}, "
          f"min weight {rule.weights.min():.3e}")
    print(f"max relative monomial error {rep.max_rel_error:.3e} at x^{rep.worst_monomial[0]} "
          f"y^{rep.worst_monomial[1]}: {'PASS' if rep.passed else 'FAIL'}")
    xsq = local_error_h1(target_xsq(), [(0, 0), (1, 0), (0, 1)]).value
    rel = abs(xsq - 1 / 9) * 9
    ok = rel <= 1e-12
    print(f"H1 error of x^2 on the reference triangle {xsq:.17g} (rel. deviation from 1/9 "
          f"{rel:.2e}): {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if rep.passed and ok else EXIT_FAIL

