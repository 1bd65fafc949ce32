"""Synthetic recovery problems and the paired Monte-Carlo success-rate sweep.

Every (k, trial) cell gets its own generator seeded from
``SeedSequence(master_seed, spawn_key=(k, trial))``, so a cell can be
regenerated in isolation and the sweep result does not depend on the
order in which cells run or on the number of worker processes. All
algorithms in a sweep see the same problem instance per cell.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError

log = logging.getLogger(__name__)

SUCCESS_TOL = 1e-3
COEFF_DISTS = ("spikes", "gaussian", "student-t")
STUDENT_DOF = 3.0
CSV_HEADER = ["algorithm", "k", "trials", "successes", "probability", "mean_linf",
              "mean_seconds"]
REPORT_FORMAT = "scalemix-sweep/1"


@dataclass(frozen=True)
class ProblemSpec:
    n: int = 50
    m: int = 250
    k: int = 10
    coeff_dist: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.coeff_dist not in COEFF_DISTS:
            raise DomainError(f"coeff_dist must be one of {COEFF_DISTS}, got {self.coeff_dist!r}")
        if not (0 <= self.k <= self.n < self.m):
            raise DomainError(f"need 0 <= k <= n < m, got k={self.k}, n={self.n}, m={self.m}")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class Problem:
    phi: np.ndarray
    x_gen: np.ndarray
    y: np.ndarray
    spec: ProblemSpec | None = None


@dataclass
class TrialOutcome:
    algorithm: str
    k: int
    trial: int
    success: bool
    linf_err: float
    l2_err: float
    wall_time: float
    error: str | None = None


def child_seed(master_seed: int, k: int, trial: int) -> int:
    """64-bit seed for cell (k, trial), independent of every other cell."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(k), int(trial)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def gen_problem(spec: ProblemSpec) -> Problem:
    """Gaussian dictionary, uniform random support, nonzeros per ``coeff_dist``."""
    rng = np.random.default_rng(spec.seed)
    phi = rng.standard_normal((spec.n, spec.m))
    support = rng.choice(spec.m, size=spec.k, replace=False)
    if spec.coeff_dist == "spikes":
        values = rng.choice(np.array([-1.0, 1.0]), size=spec.k)
    elif spec.coeff_dist == "gaussian":
        values = rng.standard_normal(spec.k)
    else:
        values = rng.standard_t(STUDENT_DOF, size=spec.k)
    x = np.zeros(spec.m)
    x[support] = values
    for arr in (phi, x):
        arr.setflags(write=False)
    y = phi @ x
    y.setflags(write=False)
    return Problem(phi, x, y, spec)


def score(x_hat, x_gen, tol: float = SUCCESS_TOL):
    """Return ``(success, linf_err, l2_err)``; success iff linf_err <= tol."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_gen = np.asarray(x_gen, dtype=float)
    if x_hat.shape != x_gen.shape:
        raise DomainError(f"length mismatch: {x_hat.shape} vs {x_gen.shape}")
    d = x_hat - x_gen
    linf = float(np.max(np.abs(d))) if d.size else 0.0
    if not np.all(np.isfinite(d)):
        linf = math.inf
    return linf <= tol, linf, float(np.linalg.norm(d))


@dataclass
class SweepReport:
    grid: list
    algorithms: list
    trials: int
    master_seed: int
    config: dict
    outcomes: dict = field(default_factory=dict)  # algorithm -> k -> [TrialOutcome]
    seeds: dict = field(default_factory=dict)  # (k, trial) -> child seed

    def cell(self, algorithm: str, k: int) -> list:
        try:
            return self.outcomes[algorithm][k]
        except KeyError:
            raise KeyError(f"no outcomes for algorithm {algorithm!r} at k={k}") from None

    def successes(self, algorithm: str, k: int) -> int:
        return sum(o.success for o in self.cell(algorithm, k))

    def probability(self, algorithm: str, k: int) -> float:
        cell = self.cell(algorithm, k)
        return self.successes(algorithm, k) / len(cell) if cell else 0.0

    def mean_linf(self, algorithm: str, k: int) -> float:
        cell = self.cell(algorithm, k)
        return math.fsum(o.linf_err for o in cell) / len(cell) if cell else math.nan

    def mean_seconds(self, algorithm: str, k: int) -> float:
        cell = self.cell(algorithm, k)
        return math.fsum(o.wall_time for o in cell) / len(cell) if cell else math.nan

    def rows(self):
        for name in self.algorithms:
            for k in self.grid:
                yield name, k


def _limit_blas_threads():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - optional
        return
    threadpool_limits(1)


def _run_cell(algorithms, n, m, coeff_dist, k, trial, seed, timeout):
    problem = gen_problem(ProblemSpec(n, m, k, coeff_dist, seed))
    out = []
    for alg in algorithms:
        t0 = time.perf_counter()
        try:
            x_hat, _info = alg.solve(problem)
            elapsed = time.perf_counter() - t0
            ok, linf, l2 = score(x_hat, problem.x_gen)
            err = None
            if elapsed > timeout:
                ok, err = False, f"timeout ({elapsed:.1f} s > {timeout} s)"
        except Exception as exc:  # a failing solver must not abort the sweep
            elapsed = time.perf_counter() - t0
            ok, linf, l2, err = False, math.inf, math.inf, f"{type(exc).__name__}: {exc}"
            log.warning("%s failed on k=%d trial=%d: %s", alg.name, k, trial, err)
        out.append(TrialOutcome(alg.name, k, trial, bool(ok), linf, l2, elapsed, err))
    return out


def run_sweep(algorithms, k_values, trials: int, base_spec: ProblemSpec | None = None,
              master_seed: int = 0, threads: int = 1, timeout: float = 60.0) -> SweepReport:
    """Solve ``trials`` random problems per k with every algorithm.

    ``base_spec`` supplies n, m and the coefficient distribution; its k and
    seed are replaced per cell. ``threads`` is the number of worker
    processes (1 runs inline).
    """
    algorithms = list(algorithms)
    k_values = [int(k) for k in k_values]
    if not algorithms:
        raise DomainError("at least one algorithm is required")
    if trials < 1:
        raise DomainError("trials must be >= 1")
    names = [a.name for a in algorithms]
    if len(set(names)) != len(names):
        raise DomainError(f"algorithm names must be unique, got {names}")
    base = base_spec or ProblemSpec()
    for k in k_values:
        ProblemSpec(base.n, base.m, k, base.coeff_dist, 0)  # validates k

    cells = [(k, t, child_seed(master_seed, k, t)) for k in k_values for t in range(trials)]
    jobs = [(algorithms, base.n, base.m, base.coeff_dist, k, t, s, timeout) for k, t, s in cells]
    if threads <= 1:
        _limit_blas_threads()
        results = [_run_cell(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads, initializer=_limit_blas_threads) as pool:
            futures = [pool.submit(_run_cell, *job) for job in jobs]
            results = [f.result() for f in futures]

    outcomes = {name: {k: [None] * trials for k in k_values} for name in names}
    for cell in results:
        for o in cell:
            outcomes[o.algorithm][o.k][o.trial] = o
    config = {
        "n": base.n, "m": base.m, "coeff_dist": base.coeff_dist,
        "success_tol": SUCCESS_TOL, "timeout": timeout,
        "algorithms": {a.name: a.params for a in algorithms},
    }
    return SweepReport(k_values, names, trials, int(master_seed), config, outcomes,
                       {(k, t): s for k, t, s in cells})


def paired_compare(report: SweepReport, algo_a: str, algo_b: str, k: int) -> dict:
    """Counts of trials where both, only one, or neither algorithm succeeded."""
    a = report.cell(algo_a, k)
    b = report.cell(algo_b, k)
    counts = {"both": 0, "only_a": 0, "only_b": 0, "neither": 0}
    for oa, ob in zip(a, b):
        key = ("both" if ob.success else "only_a") if oa.success else \
              ("only_b" if ob.success else "neither")
        counts[key] += 1
    return counts


def _fmt(v: float) -> str:
    return repr(float(v))


def report_csv(report: SweepReport, timing: bool = False) -> str:
    """CSV summary; ``mean_seconds`` is left blank unless ``timing`` is set."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for name, k in report.rows():
        w.writerow([name, k, report.trials, report.successes(name, k),
                    _fmt(report.probability(name, k)), _fmt(report.mean_linf(name, k)),
                    _fmt(report.mean_seconds(name, k)) if timing else ""])
    return buf.getvalue()


def _finite_or_none(v):
    return v if math.isfinite(v) else None


def report_to_dict(report: SweepReport) -> dict:
    outcomes = []
    for name in report.algorithms:
        for k in report.grid:
            for o in report.cell(name, k):
                d = asdict(o)
                d["linf_err"] = _finite_or_none(o.linf_err)
                d["l2_err"] = _finite_or_none(o.l2_err)
                d["seed"] = report.seeds.get((o.k, o.trial))
                outcomes.append(d)
    summary = [{"algorithm": name, "k": k, "trials": report.trials,
                "successes": report.successes(name, k),
                "probability": report.probability(name, k)} for name, k in report.rows()]
    return {"format": REPORT_FORMAT, "grid": report.grid, "algorithms": report.algorithms,
            "trials": report.trials, "master_seed": report.master_seed,
            "config": report.config, "summary": summary, "outcomes": outcomes}


def report_from_dict(data: dict) -> SweepReport:
    if data.get("format") != REPORT_FORMAT:
        raise DomainError(f"not a sweep report (format={data.get('format')!r})")
    grid = [int(k) for k in data["grid"]]
    trials = int(data["trials"])
    outcomes = {name: {k: [None] * trials for k in grid} for name in data["algorithms"]}
    seeds = {}
    for d in data["outcomes"]:
        seed = d.pop("seed", None)
        for key in ("linf_err", "l2_err"):
            if d[key] is None:
                d[key] = math.inf
        o = TrialOutcome(**d)
        outcomes[o.algorithm][o.k][o.trial] = o
        if seed is not None:
            seeds[(o.k, o.trial)] = int(seed)
    return SweepReport(grid, list(data["algorithms"]), trials, int(data["master_seed"]),
                       data["config"], outcomes, seeds)


def export_report(report: SweepReport, path, fmt: str = "csv", timing: bool = False) -> Path:
    path = Path(path)
    fmt = fmt.lower()
    if fmt == "csv":
        text = report_csv(report, timing=timing)
    elif fmt == "json":
        text = json.dumps(report_to_dict(report), indent=1, sort_keys=True) + "\n"
    else:
        raise DomainError(f"unknown report format {fmt!r} (expected csv or json)")
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {os.fspath(path)}: {exc}") from exc
    return path


def load_report(path) -> SweepReport:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read report {os.fspath(path)}: {exc}") from exc
    return report_from_dict(data)
