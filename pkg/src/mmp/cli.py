"""Command-line interface: solve / rip / verify / benchmark subcommands.

Structured results go to stdout (JSON for single-shot commands, CSV for
sweeps); diagnostics go to stderr.  Exit codes: 0 success, 1 usage
error, 2 numeric or guard error (a verify run that finds violations also
exits 2).  Column indices in all output are 1-based.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import __version__, _kernels, analysis, bench, core, solvers


class UsageError(Exception):
    """Bad flag combination detected after argument parsing."""


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _jsonable(obj):
    """Recursively make a value JSON-safe; nonfinite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if hasattr(obj, "item"):  # numpy scalars
        return _jsonable(obj.item())
    return obj


def _emit(payload):
    print(json.dumps(_jsonable(payload)))


def _log(message):
    print(message, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mmp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="recover a sparse signal from a matrix and measurements")
    p.add_argument("--matrix", required=True, help="sensing matrix file ('m n' header)")
    p.add_argument("--measurements", required=True, help="measurement vector file (m x 1)")
    p.add_argument("--k", type=int, required=True, help="target sparsity")
    p.add_argument(
        "--algorithm", required=True, choices=["omp", "mmp-bf", "mmp-df", "oracle"]
    )
    p.add_argument("--l", type=int, default=1, help="expansion factor (children per candidate)")
    p.add_argument("--nmax", type=int, default=1, help="depth-first candidate budget")
    p.add_argument("--epsilon", type=float, default=None, help="depth-first stop threshold on ||r||^2")
    p.add_argument("--cap", type=int, default=None, help="breadth-first per-iteration candidate cap")
    p.add_argument("--support", default=None, help="true support for --algorithm oracle, e.g. 2,5,7")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("rip", help="exact restricted-isometry constants and guarantee constants")
    p.add_argument("--matrix", required=True)
    p.add_argument("--max-order", type=int, required=True)
    p.add_argument("--k", type=int, action="append", default=[], help="sparsity of a (K, L) pair; repeatable")
    p.add_argument("--l", type=int, action="append", default=[], help="expansion of a (K, L) pair; repeatable")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="run the guarantee implication suite on random instances")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--n", type=int, default=11)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--l", type=int, default=2)

    p = sub.add_parser("benchmark", help="run a Monte Carlo sweep from a JSON config")
    p.add_argument("--config", required=True, help="experiment config file (JSON)")
    p.add_argument("--out", required=True, help="output directory for CSV/SVG files")
    p.add_argument("--plot", action="store_true", help="also write SVG charts")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def _cmd_solve(args) -> int:
    matrix = core.load_matrix(args.matrix)
    y = core.load_vector(args.measurements)
    config = solvers.SolverConfig(
        K=args.k,
        L=args.l,
        max_candidates_per_iter=args.cap,
        N_max=args.nmax,
        epsilon=args.epsilon,
    )
    if args.algorithm == "omp":
        out = solvers.omp(matrix, y, args.k)
    elif args.algorithm == "mmp-bf":
        out = solvers.mmp_bf(matrix, y, config)
    elif args.algorithm == "mmp-df":
        out = solvers.mmp_df(matrix, y, config)
    else:
        if not args.support:
            raise UsageError("--algorithm oracle requires --support")
        support = [int(tok) for tok in args.support.split(",") if tok]
        out = solvers.oracle_ls(matrix, y, support)
    _emit(
        {
            "seed": args.seed,
            "algorithm": args.algorithm,
            "support": list(out.support),
            "coefficients": [float(c) for c in out.coefficients],
            "residual_norm_sq": out.residual_norm_sq,
            "stats": {
                "candidates_per_iteration": list(out.stats.candidates_per_iteration),
                "paths_explored": out.stats.paths_explored,
                "terminated_by": out.stats.terminated_by,
            },
        }
    )
    return 0


def _cmd_rip(args) -> int:
    matrix = core.load_matrix(args.matrix)
    if len(args.k) != len(args.l):
        raise UsageError("--k and --l must be given the same number of times")
    report = analysis.rip_report(matrix, args.max_order)
    deltas = dict(report.deltas)
    pairs = []
    for K, L in zip(args.k, args.l):
        for order in (K, 2 * K, K + L):
            if order not in deltas:
                deltas[order] = analysis.rip_constant(matrix, order)
        consts = analysis.guarantee_constants(
            deltas[K], deltas[2 * K], deltas[K + L], K, L
        )
        pairs.append(
            {
                "K": K,
                "L": L,
                "first_iter_bound": analysis.first_iter_bound(K, L),
                **consts.as_dict(),
                "reference_conditions": analysis.reference_recovery_bounds(K),
            }
        )
    _emit(
        {
            "seed": args.seed,
            "m": matrix.m,
            "n": matrix.n,
            "max_order": report.max_order,
            "deltas": {str(k): v for k, v in sorted(deltas.items())},
            "pairs": pairs,
        }
    )
    return 0


def _cmd_verify(args) -> int:
    report = analysis.run_implication_suite(
        trials=args.trials, seed=args.seed, m=args.m, n=args.n, K=args.k, L=args.l
    )
    _emit(report.as_dict())
    return 0 if report.total_violations == 0 else 2


def _load_experiment_config(path, seed_override):
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise core.MmpError(f"{path}: config must be a JSON object")

    def require(key, kind):
        if key not in raw:
            raise core.MmpError(f"{path}: missing config key {key!r}")
        value = raw[key]
        if kind is float:
            if not isinstance(value, (int, float)):
                raise core.MmpError(f"{path}: {key} must be a number")
        elif not isinstance(value, kind):
            raise core.MmpError(f"{path}: {key} must be {kind.__name__}")
        return value

    snr_raw = raw.get("snr_db_values", "noiseless")
    if snr_raw == "noiseless":
        snr_values = [math.inf]
    else:
        if not isinstance(snr_raw, list):
            raise core.MmpError(f"{path}: snr_db_values must be a list or 'noiseless'")
        snr_values = [
            math.inf if s in ("inf", None, "noiseless") else float(s) for s in snr_raw
        ]

    solver_specs = []
    for entry in require("solvers", list):
        if not isinstance(entry, dict) or "algorithm" not in entry:
            raise core.MmpError(f"{path}: each solver entry needs an 'algorithm' key")
        unknown = set(entry) - {"algorithm", "l", "cap", "n_max", "epsilon"}
        if unknown:
            raise core.MmpError(f"{path}: unknown solver keys {sorted(unknown)}")
        solver_specs.append(
            bench.SolverSpec(
                algorithm=entry["algorithm"],
                L=int(entry.get("l", 1)),
                max_candidates_per_iter=(
                    int(entry["cap"]) if entry.get("cap") is not None else None
                ),
                N_max=int(entry.get("n_max", 1)),
                epsilon=entry.get("epsilon"),
            )
        )

    seed = seed_override if seed_override is not None else int(raw.get("seed", 0))
    return bench.ExperimentConfig(
        m=require("m", int),
        n=require("n", int),
        k_values=tuple(require("k_values", list)),
        snr_db_values=tuple(snr_values),
        trials=require("trials", int),
        seed=seed,
        solvers=tuple(solver_specs),
        fix_matrix=bool(raw.get("fix_matrix", False)),
    )


def _cmd_benchmark(args) -> int:
    config = _load_experiment_config(args.config, args.seed)
    _log(f"resolved seed: {config.seed}")
    rows, records = bench.run_experiment(config)
    paths = bench.emit_results(rows, args.out, plot=args.plot, records=records)
    for path in paths:
        _log(f"wrote {path}")
    for line in bench.aggregate_csv_lines(rows):
        print(line)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _log(f"mmp {__version__} [{_kernels.backend_name()} backend] seed={getattr(args, 'seed', 0)}")
    handlers = {
        "solve": _cmd_solve,
        "rip": _cmd_rip,
        "verify": _cmd_verify,
        "benchmark": _cmd_benchmark,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        _log(f"mmp {args.command}: error: {exc}")
        return 1
    except (core.MmpError, ValueError, OSError, json.JSONDecodeError) as exc:
        _log(f"mmp {args.command}: error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
