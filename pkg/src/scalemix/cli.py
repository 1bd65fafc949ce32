"""Command-line interface: ``scalemix solve | sweep | check``.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import checks
from .algorithms import ALGORITHMS, ALIASES, EXTRA_ALGORITHMS, make_algorithm
from .bench import COEFF_DISTS, ProblemSpec, export_report, run_sweep, score
from .errors import DomainError, NumericError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("scalemix")


class CsvParseError(DomainError):
    pass


def read_matrix_csv(path) -> np.ndarray:
    """Read a dense real matrix, one CSV row per matrix row."""
    path = Path(path)
    rows = []
    width = None
    with path.open(newline="") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise CsvParseError(f"{path}: row {i} has {len(row)} columns, expected {width}")
            vals = []
            for j, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise CsvParseError(f"{path}: row {i}, column {j}: "
                                        f"cannot parse {cell!r} as a number") from None
            rows.append(vals)
    if not rows:
        raise CsvParseError(f"{path}: no data")
    return np.array(rows, dtype=float)


def read_vector_csv(path) -> np.ndarray:
    a = read_matrix_csv(path)
    if a.shape[1] != 1:
        raise CsvParseError(f"{path}: expected a single column, found {a.shape[1]}")
    return a[:, 0]


def write_vector_csv(path, v):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x in v:
            w.writerow([repr(float(x))])


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def cmd_solve(args) -> int:
    phi = read_matrix_csv(args.phi)
    y = read_vector_csv(args.y)
    if phi.shape[0] != y.shape[0]:
        raise DomainError(f"Phi has {phi.shape[0]} rows but y has {y.shape[0]} entries")
    if args.sigma2 is not None and not args.sigma2 > 0:
        raise DomainError("--sigma2 must be positive")
    truth = read_vector_csv(args.truth) if args.truth else None
    if truth is not None and truth.shape[0] != phi.shape[1]:
        raise DomainError(f"--truth has {truth.shape[0]} entries, Phi has {phi.shape[1]} columns")
    alg = make_algorithm(args.algo, noise_var=args.sigma2, epsilon=args.eps, lam=args.lam)
    x_hat, info = alg.solve(SimpleNamespace(phi=phi, y=y))
    out = Path(args.out)
    write_vector_csv(out, x_hat)
    sidecar = {"algorithm": alg.name, "params": alg.params,
               **{k: _jsonable(v) for k, v in info.items()}}
    if truth is not None:
        ok, linf, l2 = score(x_hat, truth)
        sidecar.update(success=ok, linf_err=_jsonable(linf), l2_err=_jsonable(l2))
    Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
    print(f"wrote {out} ({x_hat.size} coefficients, {np.count_nonzero(x_hat)} nonzero)")
    return EXIT_OK


def load_sweep_config(ref: str) -> dict:
    """Load a sweep config from a path or a bundled name (``full``, ``desk``)."""
    p = Path(ref)
    if p.exists():
        text = p.read_text()
    else:
        name = ref if ref.endswith(".json") else ref + ".json"
        try:
            text = resources.files("scalemix.configs").joinpath(name).read_text()
        except (FileNotFoundError, OSError):
            raise OSError(f"sweep config {ref!r} not found") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"sweep config {ref!r} is not valid JSON: {exc}") from None


def _build_algorithms(spec, noise_var):
    algs = []
    for entry in spec:
        if isinstance(entry, str):
            entry = {"name": entry}
        entry = dict(entry)
        name = entry.pop("name", None)
        if name not in ALGORITHMS + EXTRA_ALGORITHMS + tuple(ALIASES):
            raise DomainError(f"unknown algorithm {name!r}; valid names: "
                              + ", ".join(ALGORITHMS + EXTRA_ALGORITHMS))
        unknown = set(entry) - {"epsilon", "lambda", "update_lambda", "noise_var"}
        if unknown:
            raise DomainError(f"unknown parameters for {name}: {sorted(unknown)}")
        algs.append(make_algorithm(name, noise_var=entry.get("noise_var", noise_var),
                                   epsilon=entry.get("epsilon"), lam=entry.get("lambda"),
                                   update_lambda=entry.get("update_lambda")))
    return algs


def cmd_sweep(args) -> int:
    cfg = load_sweep_config(args.config)
    dists = cfg.get("distributions") or [cfg.get("distribution", "gaussian")]
    for d in dists:
        if d not in COEFF_DISTS:
            raise DomainError(f"unknown distribution {d!r}; valid: {', '.join(COEFF_DISTS)}")
    k_values = cfg.get("k_values", [5, 10, 15, 20, 25, 30, 35])
    trials = int(cfg.get("trials", 100))
    n, m = int(cfg.get("n", 50)), int(cfg.get("m", 250))
    seed = args.seed if args.seed is not None else int(cfg.get("master_seed", 0))
    if not 0 <= seed < 2 ** 64:
        raise DomainError("--seed must be an unsigned 64-bit integer")
    algs = _build_algorithms(cfg.get("algorithms", list(ALGORITHMS)),
                             cfg.get("noise_var"))
    fmt = args.format or cfg.get("format", "csv")
    threads = args.threads if args.threads is not None else int(cfg.get("threads", 1))
    for k in k_values:
        ProblemSpec(n, m, int(k), dists[0], 0)
    out = Path(args.out)
    for dist in dists:
        report = run_sweep(algs, k_values, trials, ProblemSpec(n, m, 0, dist, 0),
                           master_seed=seed, threads=threads,
                           timeout=float(cfg.get("timeout", 60.0)))
        path = out if len(dists) == 1 else out.with_name(f"{out.stem}_{dist}{out.suffix}")
        export_report(report, path, fmt, timing=args.timing)
        _print_summary(report, dist)
        print(f"wrote {path}")
    return EXIT_OK


def _print_summary(report, dist):
    names = report.algorithms
    width = max(12, *(len(n) + 2 for n in names))
    print(f"success probability ({dist}, {report.trials} trials, "
          f"N={report.config['n']}, M={report.config['m']})")
    print("k".rjust(4) + "".join(n.rjust(width) for n in names))
    for k in report.grid:
        print(str(k).rjust(4) + "".join(f"{report.probability(n, k):.3f}".rjust(width)
                                        for n in names))


def cmd_check(args) -> int:
    results = []
    for check in checks.ALL_CHECKS:
        res = check()
        results.append(res)
        print(res.line())
        if args.verbose and res.detail:
            print("    " + res.detail)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed checks: " + ", ".join(failed))
        return EXIT_NUMERIC
    print("all checks passed")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are validation failures (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="scalemix", description="Type I / Type II sparse recovery with scale-mixture priors")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="recover x from a dictionary and measurements")
    p.add_argument("--phi", required=True, help="dictionary CSV, one row per matrix row")
    p.add_argument("--y", required=True, help="measurement vector, single-column CSV")
    p.add_argument("--algo", required=True,
                   help="one of " + ", ".join(ALGORITHMS + EXTRA_ALGORITHMS))
    p.add_argument("--sigma2", type=float, help="noise variance (default 1e-6)")
    p.add_argument("--eps", type=float, help="epsilon of the prior")
    p.add_argument("--lambda", dest="lam", type=float, help="lambda of the prior")
    p.add_argument("--truth", help="ground-truth x (single-column CSV) for scoring")
    p.add_argument("--out", required=True, help="output CSV; a .json sidecar is written next to it")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a phase-transition sweep from a JSON config")
    p.add_argument("--config", required=True, help="config path or bundled name (full, desk)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--threads", type=int, help="worker processes (default 1)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--timing", action="store_true",
                   help="fill the mean_seconds CSV column (makes output machine dependent)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="run the numerical self-checks")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
