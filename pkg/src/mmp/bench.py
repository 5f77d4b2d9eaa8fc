"""Synthetic problem generation, recovery metrics, and the Monte Carlo
experiment runner.

Reproducibility scheme: every trial owns a counter-based Philox stream
derived as ``Philox(SeedSequence(entropy=seed, spawn_key=(cell_index,
trial_index)))``, where cells enumerate (solver, K, SNR) combinations in
config order.  Per trial the draw order is matrix (unless fixed), then
signal, then noise; the fixed-matrix stream uses spawn key
``(0xFFFFFFFF,)``.  Results are therefore identical however trials are
scheduled, serial or parallel (timing fields aside).
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Measurement, MmpError, SensingMatrix, SparseSignal
from .solvers import (
    PartialRecoveryError,
    RecoveryOutput,
    SolverConfig,
    mmp_bf,
    mmp_df,
    omp,
    oracle_ls,
)

ALGORITHMS = ("omp", "mmp-bf", "mmp-df", "oracle")
_MATRIX_SPAWN_KEY = 0xFFFFFFFF

CSV_HEADER = [
    "algorithm",
    "K",
    "snr_db",
    "err",
    "mse",
    "p_md",
    "p_f",
    "mean_candidates",
    "mean_time_ms",
]


@dataclass(frozen=True)
class SolverSpec:
    """One solver entry of the sweep; K is supplied per sweep cell."""

    algorithm: str
    L: int = 1
    max_candidates_per_iter: int | None = None
    N_max: int = 1
    epsilon: float | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}, expected {ALGORITHMS}")

    def config_for(self, K: int) -> SolverConfig:
        return SolverConfig(
            K=K,
            L=self.L,
            max_candidates_per_iter=self.max_candidates_per_iter,
            N_max=self.N_max,
            epsilon=self.epsilon,
        )

    def label(self) -> str:
        return self.algorithm


@dataclass(frozen=True)
class ExperimentConfig:
    m: int
    n: int
    k_values: tuple
    snr_db_values: tuple  # math.inf entries mean noiseless
    trials: int
    seed: int
    solvers: tuple
    fix_matrix: bool = False

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "snr_db_values", tuple(float(s) for s in self.snr_db_values))
        object.__setattr__(self, "solvers", tuple(self.solvers))
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if not self.k_values or not self.snr_db_values or not self.solvers:
            raise ValueError("k_values, snr_db_values and solvers must be nonempty")
        if any(k > self.m for k in self.k_values):
            raise ValueError("every K must satisfy K <= m")

    def cells(self):
        """Deterministic enumeration of (solver, K, snr) sweep cells."""
        out = []
        for spec in self.solvers:
            for k in self.k_values:
                for snr in self.snr_db_values:
                    out.append((spec, k, snr))
        return out


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    algorithm: str
    K: int
    snr_db: float
    exact: bool
    squared_error: float
    missed: int
    false_alarms: int
    candidates_total: int
    wall_time: float


@dataclass(frozen=True)
class AggregateRow:
    algorithm: str
    K: int
    snr_db: float
    err: float
    mse: float
    p_md: float
    p_f: float
    mean_candidates: float
    mean_time: float


def gen_sensing_matrix(m: int, n: int, rng) -> SensingMatrix:
    """Random matrix with i.i.d. N(0, 1/m) entries."""
    return SensingMatrix(rng.normal(0.0, 1.0 / math.sqrt(m), size=(m, n)))


def gen_sparse_signal(n: int, K: int, rng) -> SparseSignal:
    """K-sparse signal: uniform random support, standard normal values."""
    if K > n:
        raise ValueError("K cannot exceed n")
    values = np.zeros(n)
    if K:
        support = rng.choice(n, size=K, replace=False)
        values[support] = rng.standard_normal(K)
    return SparseSignal(values)


def add_noise(y_clean, snr_db: float, rng) -> Measurement:
    """Additive Gaussian noise with per-element variance 10^(-snr_db/10).

    ``snr_db = inf`` is the noiseless case (zero noise vector retained).
    """
    y_clean = np.asarray(y_clean, dtype=np.float64)
    if math.isinf(snr_db):
        return Measurement(y_clean.copy(), np.zeros_like(y_clean))
    sigma = 10.0 ** (-snr_db / 20.0)
    v = rng.normal(0.0, sigma, size=y_clean.shape)
    return Measurement(y_clean + v, v)


def metrics(x_true: SparseSignal, output: RecoveryOutput) -> dict:
    """Per-trial recovery metrics of an estimate against the truth."""
    n = x_true.values.size
    est_support = set(output.support)
    true_support = set(x_true.support)
    diff = x_true.values - output.dense(n)
    return {
        "exact": est_support == true_support,
        "squared_error": float(diff @ diff),
        "missed": len(true_support - est_support),
        "false_alarms": len(est_support - true_support),
    }


def _trial_rng(seed: int, cell_index: int, trial: int):
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(cell_index, trial)))
    )


def fixed_matrix(config: ExperimentConfig) -> SensingMatrix:
    """The shared matrix used by all trials when fix_matrix is set."""
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=config.seed, spawn_key=(_MATRIX_SPAWN_KEY,)))
    )
    return gen_sensing_matrix(config.m, config.n, rng)


def _solve(spec: SolverSpec, matrix, measurement, signal, K):
    y = measurement.y
    if spec.algorithm == "omp":
        return omp(matrix, y, K)
    if spec.algorithm == "mmp-bf":
        return mmp_bf(matrix, y, spec.config_for(K))
    if spec.algorithm == "mmp-df":
        return mmp_df(matrix, y, spec.config_for(K))
    return oracle_ls(matrix, y, signal.support)


def run_trial(config: ExperimentConfig, cell_index: int, trial: int, matrix=None) -> TrialRecord:
    """Run one independent trial of one sweep cell.

    Solver failures are recorded (using the best partial estimate when
    one is available), never raised.
    """
    spec, K, snr = config.cells()[cell_index]
    rng = _trial_rng(config.seed, cell_index, trial)
    if matrix is None:
        matrix = gen_sensing_matrix(config.m, config.n, rng)
    signal = gen_sparse_signal(config.n, K, rng)
    measurement = add_noise(matrix.entries @ signal.values, snr, rng)

    start = time.perf_counter()
    try:
        output = _solve(spec, matrix, measurement, signal, K)
    except PartialRecoveryError as exc:
        output = exc.partial
    except MmpError:
        output = None
    wall = time.perf_counter() - start

    if output is None:
        m = {
            "exact": False,
            "squared_error": float(signal.values @ signal.values),
            "missed": signal.sparsity,
            "false_alarms": 0,
        }
        candidates = 0
    else:
        m = metrics(signal, output)
        candidates = output.stats.paths_explored
    return TrialRecord(
        trial=trial,
        algorithm=spec.label(),
        K=K,
        snr_db=snr,
        candidates_total=candidates,
        wall_time=wall,
        **m,
    )


def _run_cell(args):
    config, cell_index = args
    matrix = fixed_matrix(config) if config.fix_matrix else None
    return [
        run_trial(config, cell_index, t, matrix=matrix) for t in range(config.trials)
    ]


def resolve_workers(explicit=None) -> int:
    """Worker count: explicit argument, else MMP_THREADS, else CPU count."""
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("MMP_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(config: ExperimentConfig, workers=None):
    """Run the full sweep; returns (aggregate rows, full trial log).

    Trials are independent and may run in parallel (`workers` > 1);
    the per-trial seeding makes the records identical either way.
    """
    workers = resolve_workers(workers)
    cells = config.cells()
    tasks = [(config, i) for i in range(len(cells))]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_cell = list(pool.map(_run_cell, tasks))
    else:
        per_cell = [_run_cell(t) for t in tasks]

    records = [rec for cell_records in per_cell for rec in cell_records]
    rows = []
    for (spec, K, snr), cell_records in zip(cells, per_cell):
        t = len(cell_records)
        rows.append(
            AggregateRow(
                algorithm=spec.label(),
                K=K,
                snr_db=snr,
                err=sum(r.exact for r in cell_records) / t,
                mse=sum(r.squared_error for r in cell_records) / t,
                p_md=sum(r.missed for r in cell_records) / (t * K),
                p_f=sum(r.false_alarms for r in cell_records) / (t * K),
                mean_candidates=sum(r.candidates_total for r in cell_records) / t,
                mean_time=sum(r.wall_time for r in cell_records) / t,
            )
        )
    return rows, records


def _fmt_snr(snr: float) -> str:
    return "inf" if math.isinf(snr) else repr(float(snr))


def aggregate_csv_lines(rows):
    """CSV lines (including header) for a list of aggregate rows."""
    lines = [",".join(CSV_HEADER)]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.algorithm,
                    str(r.K),
                    _fmt_snr(r.snr_db),
                    repr(r.err),
                    repr(r.mse),
                    repr(r.p_md),
                    repr(r.p_f),
                    repr(r.mean_candidates),
                    repr(r.mean_time * 1e3),
                ]
            )
        )
    return lines


def write_aggregates(rows, path):
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(aggregate_csv_lines(rows)) + "\n")


def read_aggregates(path):
    """Parse a CSV written by :func:`write_aggregates` back into rows."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                AggregateRow(
                    algorithm=rec["algorithm"],
                    K=int(rec["K"]),
                    snr_db=math.inf if rec["snr_db"] == "inf" else float(rec["snr_db"]),
                    err=float(rec["err"]),
                    mse=float(rec["mse"]),
                    p_md=float(rec["p_md"]),
                    p_f=float(rec["p_f"]),
                    mean_candidates=float(rec["mean_candidates"]),
                    mean_time=float(rec["mean_time_ms"]) / 1e3,
                )
            )
    return rows


def write_trials(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "trial",
                "algorithm",
                "K",
                "snr_db",
                "exact",
                "squared_error",
                "missed",
                "false_alarms",
                "candidates_total",
                "wall_time_ms",
            ]
        )
        for r in records:
            writer.writerow(
                [
                    r.trial,
                    r.algorithm,
                    r.K,
                    _fmt_snr(r.snr_db),
                    int(r.exact),
                    repr(r.squared_error),
                    r.missed,
                    r.false_alarms,
                    r.candidates_total,
                    repr(r.wall_time * 1e3),
                ]
            )


def mse_to_db(mse: float) -> float:
    """10 log10 of the MSE; zero maps to the chart floor of -200 dB."""
    return 10 * math.log10(mse) if mse > 0 else -200.0


def plot_results(rows, out_dir):
    """SVG line charts: exact-recovery rate vs K and MSE (dB) vs SNR."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    noiseless = [r for r in rows if math.isinf(r.snr_db)]
    if noiseless:
        fig, ax = plt.subplots()
        for alg in sorted({r.algorithm for r in noiseless}):
            pts = sorted((r.K, r.err) for r in noiseless if r.algorithm == alg)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=alg)
        ax.set_xlabel("sparsity K")
        ax.set_ylabel("exact recovery ratio")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
        ax.grid(True, alpha=0.3)
        path = os.path.join(out_dir, "err_vs_k.svg")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    noisy = [r for r in rows if not math.isinf(r.snr_db)]
    if noisy:
        fig, ax = plt.subplots()
        for alg in sorted({r.algorithm for r in noisy}):
            for k in sorted({r.K for r in noisy if r.algorithm == alg}):
                pts = sorted(
                    (r.snr_db, mse_to_db(r.mse))
                    for r in noisy
                    if r.algorithm == alg and r.K == k
                )
                ax.plot(
                    [p[0] for p in pts],
                    [p[1] for p in pts],
                    marker="o",
                    label=f"{alg} (K={k})",
                )
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("MSE (dB)")
        ax.legend()
        ax.grid(True, alpha=0.3)
        path = os.path.join(out_dir, "mse_vs_snr.svg")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def emit_results(rows, out_dir, plot=False, records=None):
    """Write aggregate (and optional trial-level) CSVs plus SVG charts."""
    if not rows:
        raise ValueError("no aggregate rows to write")
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "aggregates.csv")]
    write_aggregates(rows, paths[0])
    if records is not None:
        path = os.path.join(out_dir, "trials.csv")
        write_trials(records, path)
        paths.append(path)
    if plot:
        paths.extend(plot_results(rows, out_dir))
    return paths
