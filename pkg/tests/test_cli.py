"""CLI contract: subcommand output schemas, exit codes, pure relay of
library values."""

import json
import math

import numpy as np
import pytest

from mmp import SensingMatrix, analysis, save_matrix, save_vector
from mmp.cli import main


@pytest.fixture()
def identity_files(tmp_path):
    save_matrix(SensingMatrix(np.eye(3)), tmp_path / "id3.txt")
    save_vector(np.array([0.0, 5.0, 0.0]), tmp_path / "y.txt")
    return str(tmp_path / "id3.txt"), str(tmp_path / "y.txt")


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSolve:
    def test_identity_omp(self, capsys, identity_files):
        mat, y = identity_files
        code, out, _ = run_cli(
            capsys, "solve", "--matrix", mat, "--measurements", y,
            "--k", "1", "--algorithm", "omp",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["support"] == [2]
        assert payload["coefficients"] == [5.0]
        assert payload["residual_norm_sq"] == 0.0
        assert payload["seed"] == 0
        assert payload["stats"]["terminated_by"] == "complete"

    def test_missing_k_is_usage_error(self, capsys, identity_files):
        mat, y = identity_files
        code, _, err = run_cli(
            capsys, "solve", "--matrix", mat, "--measurements", y,
            "--algorithm", "omp",
        )
        assert code == 1
        assert "--k" in err

    def test_unknown_flag_rejected(self, capsys, identity_files):
        mat, y = identity_files
        code, _, _ = run_cli(
            capsys, "solve", "--matrix", mat, "--measurements", y,
            "--k", "1", "--algorithm", "omp", "--bogus", "1",
        )
        assert code == 1

    def test_matches_library_call(self, capsys, tmp_path):
        rng = np.random.default_rng(33)
        phi = SensingMatrix(rng.normal(0, 0.2, (12, 20)))
        x = np.zeros(20)
        x[[3, 8, 15]] = rng.standard_normal(3)
        y = phi.entries @ x
        save_matrix(phi, tmp_path / "m.txt")
        save_vector(y, tmp_path / "y.txt")
        code, out, _ = run_cli(
            capsys, "solve", "--matrix", str(tmp_path / "m.txt"),
            "--measurements", str(tmp_path / "y.txt"),
            "--k", "3", "--algorithm", "mmp-bf", "--l", "2", "--cap", "10",
        )
        assert code == 0
        payload = json.loads(out)
        from mmp import SolverConfig, mmp_bf

        direct = mmp_bf(phi, y, SolverConfig(K=3, L=2, max_candidates_per_iter=10))
        assert tuple(payload["support"]) == direct.support
        assert payload["coefficients"] == [float(c) for c in direct.coefficients]
        assert payload["residual_norm_sq"] == direct.residual_norm_sq

    def test_oracle_needs_support(self, capsys, identity_files):
        mat, y = identity_files
        code, _, err = run_cli(
            capsys, "solve", "--matrix", mat, "--measurements", y,
            "--k", "1", "--algorithm", "oracle",
        )
        assert code == 1
        assert "--support" in err

    def test_oracle_with_support(self, capsys, identity_files):
        mat, y = identity_files
        code, out, _ = run_cli(
            capsys, "solve", "--matrix", mat, "--measurements", y,
            "--k", "1", "--algorithm", "oracle", "--support", "2",
        )
        assert code == 0
        assert json.loads(out)["support"] == [2]

    def test_numeric_error_exit_two(self, capsys, identity_files):
        mat, y = identity_files
        code, _, _ = run_cli(
            capsys, "solve", "--matrix", mat, "--measurements", y,
            "--k", "5", "--algorithm", "omp",  # K > m
        )
        assert code == 2

    def test_malformed_matrix_exit_two(self, capsys, tmp_path, identity_files):
        _, y = identity_files
        bad = tmp_path / "bad.txt"
        bad.write_text("oops\n")
        code, _, _ = run_cli(
            capsys, "solve", "--matrix", str(bad), "--measurements", y,
            "--k", "1", "--algorithm", "omp",
        )
        assert code == 2


class TestRip:
    def test_deltas_match_library(self, capsys, tmp_path):
        rng = np.random.default_rng(35)
        phi = SensingMatrix(rng.normal(0, 0.3, (6, 9)))
        save_matrix(phi, tmp_path / "m.txt")
        code, out, _ = run_cli(
            capsys, "rip", "--matrix", str(tmp_path / "m.txt"), "--max-order", "2",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["deltas"]["1"] == analysis.rip_constant(phi, 1)
        assert payload["deltas"]["2"] == analysis.rip_constant(phi, 2)
        assert payload["pairs"] == []

    def test_pair_constants(self, capsys, tmp_path):
        rng = np.random.default_rng(37)
        phi = analysis.low_coherence_matrix(10, 11, rng)
        save_matrix(phi, tmp_path / "m.txt")
        code, out, _ = run_cli(
            capsys, "rip", "--matrix", str(tmp_path / "m.txt"),
            "--max-order", "2", "--k", "2", "--l", "2",
        )
        assert code == 0
        payload = json.loads(out)
        pair = payload["pairs"][0]
        assert pair["K"] == 2 and pair["L"] == 2
        consts = analysis.guarantee_constants(
            analysis.rip_constant(phi, 2),
            analysis.rip_constant(phi, 4),
            analysis.rip_constant(phi, 4),
            2,
            2,
        )
        assert pair["zeta"] == consts.zeta
        assert pair["tau"] == consts.tau
        assert pair["reference_conditions"]["cosamp"]["bound"] == 0.1
        # orders pulled in for the pair appear in the delta map
        assert "4" in payload["deltas"]

    def test_mismatched_pairs_usage_error(self, capsys, tmp_path):
        save_matrix(SensingMatrix(np.eye(3)), tmp_path / "m.txt")
        code, _, _ = run_cli(
            capsys, "rip", "--matrix", str(tmp_path / "m.txt"),
            "--max-order", "2", "--k", "2",
        )
        assert code == 1


class TestVerify:
    def test_small_run_passes(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "--trials", "5", "--seed", "1")
        assert code == 0
        payload = json.loads(out)
        assert payload["trials"] == 5
        assert payload["total_violations"] == 0
        assert payload["checks"]["noiseless_recovery"]["applicable"] == 5


class TestBenchmark:
    def config_file(self, tmp_path, **overrides):
        config = {
            "m": 12,
            "n": 18,
            "k_values": [2],
            "snr_db_values": "noiseless",
            "trials": 2,
            "seed": 9,
            "solvers": [
                {"algorithm": "omp"},
                {"algorithm": "mmp-bf", "l": 2, "cap": 6},
            ],
        }
        config.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        return str(path)

    def test_sweep_writes_csv(self, capsys, tmp_path):
        cfg = self.config_file(tmp_path)
        out_dir = tmp_path / "results"
        code, out, err = run_cli(
            capsys, "benchmark", "--config", cfg, "--out", str(out_dir),
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "algorithm,K,snr_db,err,mse,p_md,p_f,mean_candidates,mean_time_ms"
        assert len(lines) == 3
        assert (out_dir / "aggregates.csv").exists()
        assert (out_dir / "trials.csv").exists()
        assert "resolved seed: 9" in err

    def test_plot_flag_emits_svg(self, capsys, tmp_path):
        cfg = self.config_file(tmp_path, snr_db_values=["inf", 20.0])
        out_dir = tmp_path / "results"
        code, _, _ = run_cli(
            capsys, "benchmark", "--config", cfg, "--out", str(out_dir), "--plot",
        )
        assert code == 0
        assert (out_dir / "err_vs_k.svg").exists()
        assert (out_dir / "mse_vs_snr.svg").exists()

    def test_seed_override(self, capsys, tmp_path):
        cfg = self.config_file(tmp_path)
        code, _, err = run_cli(
            capsys, "benchmark", "--config", cfg, "--out", str(tmp_path / "o"),
            "--seed", "77",
        )
        assert code == 0
        assert "resolved seed: 77" in err

    def test_bad_config_exit_two(self, capsys, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{\"m\": 4}")
        code, _, _ = run_cli(
            capsys, "benchmark", "--config", str(path), "--out", str(tmp_path / "o"),
        )
        assert code == 2

    def test_unknown_solver_key_rejected(self, capsys, tmp_path):
        cfg = self.config_file(
            tmp_path, solvers=[{"algorithm": "omp", "bogus": 1}]
        )
        code, _, _ = run_cli(
            capsys, "benchmark", "--config", cfg, "--out", str(tmp_path / "o"),
        )
        assert code == 2


class TestMisc:
    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert "mmp" in capsys.readouterr().out

    def test_no_command_usage_error(self, capsys):
        assert main([]) == 1

    def test_seed_echoed_on_stderr(self, capsys, tmp_path):
        save_matrix(SensingMatrix(np.eye(2)), tmp_path / "m.txt")
        code, _, err = run_cli(
            capsys, "rip", "--matrix", str(tmp_path / "m.txt"),
            "--max-order", "1", "--seed", "4",
        )
        assert code == 0
        assert "seed=4" in err
