"""CLI and experiment-runner tests: config round-trips, file outputs,
exit codes, and byte-identical reruns."""

import os
import subprocess
import sys

import numpy as np
import pytest

from nsq.experiments import (
    ExperimentConfig,
    PREFIX_COLUMNS,
    run_experiment,
    worker_count,
)
from nsq.cli import run


def invoke(*argv):
    return run(list(argv))


class TestConfig:
    def test_text_roundtrip_lossless(self):
        cfg = ExperimentConfig(
            kind="embed-decay", n=128, p=8, lambda_sweep=(2, 4), scheme="beta:10/9",
            trials=2, points=4, seed=3, delta=0.5, out="",
        )
        again = ExperimentConfig.from_text(cfg.to_text())
        assert again == cfg
        assert again.config_hash() == cfg.config_hash()

    def test_comments_and_blanks_ignored(self):
        text = "# a comment\n\nkind=rip-estimate\nn=16\nm=8\np=4\nk=2\ntrials=5\n"
        cfg = ExperimentConfig.from_text(text)
        assert cfg.kind == "rip-estimate" and cfg.trials == 5

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_text("kind=rip-estimate\nm=8\nbogus=1\n")

    def test_sweep_required_for_decay(self):
        with pytest.raises(ValueError):
            ExperimentConfig(kind="embed-decay", n=16, p=4)

    def test_p_must_divide_m(self):
        with pytest.raises(ValueError):
            ExperimentConfig(kind="rip-estimate", n=16, m=10, p=4)

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("NSQ_THREADS", "2")
        assert worker_count() == 2
        monkeypatch.setenv("NSQ_THREADS", "bogus")
        assert worker_count() >= 1


class TestExperimentRunner:
    def test_rip_single_row_csv(self, tmp_path):
        cfg = ExperimentConfig(
            kind="rip-estimate", n=16, m=8, p=4, k=2, trials=50, seed=1,
            out=str(tmp_path / "rip"),
        )
        result = run_experiment(cfg)
        assert result.ok
        lines = (tmp_path / "rip" / "results.csv").read_text().splitlines()
        assert lines[0].startswith("# experiment=rip-estimate")
        assert lines[1].split(",")[: len(PREFIX_COLUMNS)] == list(PREFIX_COLUMNS)
        assert len(lines) == 3  # comment, header, one row

    def test_identity_rows_and_figure(self, tmp_path):
        cfg = ExperimentConfig(
            kind="expectation-identity", n=8, m=8, p=2, trials=4, seed=2,
            out=str(tmp_path / "ident"),
        )
        result = run_experiment(cfg)
        assert result.ok
        assert len(result.rows) == 4
        assert (tmp_path / "ident" / "expectation_identity_identity.png").exists()

    def test_embed_decay_outputs(self, tmp_path):
        cfg = ExperimentConfig(
            kind="embed-decay", n=64, p=4, lambda_sweep=(2, 8), scheme="beta:10/9",
            trials=3, points=6, seed=4, out=str(tmp_path / "dec"),
        )
        result = run_experiment(cfg)
        assert result.ok
        assert len(result.rows) == 2
        assert (tmp_path / "dec" / "embed_decay_decay.png").exists()
        med = [row[len(PREFIX_COLUMNS)] for row in result.rows]
        assert med[1] <= med[0]

    def test_embed_decay_monotone_full_sweep(self):
        cfg = ExperimentConfig(
            kind="embed-decay", n=256, p=4, lambda_sweep=(2, 4, 8, 16, 32),
            scheme="beta:10/9", trials=4, points=8, seed=12,
        )
        result = run_experiment(cfg)
        assert result.ok  # runner enforces the non-increasing medians itself
        med = [row[len(PREFIX_COLUMNS)] for row in result.rows]
        assert all(b <= a for a, b in zip(med, med[1:]))

    def test_recover_decay_outputs(self, tmp_path):
        cfg = ExperimentConfig(
            kind="recover-decay", n=64, p=16, k=2, lambda_sweep=(2, 4),
            scheme="sd:r=1", trials=2, eta_mode="oracle", seed=5,
            out=str(tmp_path / "rec"),
        )
        result = run_experiment(cfg)
        assert result.ok
        assert len(result.rows) == 2
        assert (tmp_path / "rec" / "recover_decay_decay.png").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = ExperimentConfig(
            kind="mrip-check", n=16, m=8, p=4, base_k=1, base_alpha=0.9,
            trials=30, seed=6, out=str(tmp_path / "a"),
        )
        first = run_experiment(cfg)
        blob_a = first.csv_path.read_bytes()
        second = run_experiment(ExperimentConfig.from_text(cfg.to_text()))
        # same config (including out): files rewritten identically
        assert second.csv_path.read_bytes() == blob_a
        assert first.summary == second.summary

    def test_seed_changes_hash(self):
        a = ExperimentConfig(kind="rip-estimate", n=16, m=8, p=4, seed=1)
        b = ExperimentConfig(kind="rip-estimate", n=16, m=8, p=4, seed=2)
        assert a.config_hash() != b.config_hash()


class TestCliCommands:
    def test_quantize_stdout(self, capsys):
        assert invoke("quantize", "--m", "32", "--scheme", "sd:r=1", "--seed", "3") == 0
        out = capsys.readouterr().out
        assert "stability margin" in out and "relation residual" in out

    def test_quantize_csv(self, tmp_path, capsys):
        out = tmp_path / "q.csv"
        code = invoke("quantize", "--m", "8", "--scheme", "beta:10/9", "--out", str(out))
        assert code == 0 and out.exists()
        lines = out.read_text().splitlines()
        assert lines[0] == "i,y,q,u" and len(lines) == 9

    def test_quantize_input_file(self, tmp_path, capsys):
        src = tmp_path / "y.txt"
        src.write_text("0.5\n0.5\n0.5\n")
        assert invoke("quantize", "--input", str(src), "--scheme", "sd:r=1") == 0
        assert "state sup-norm" in capsys.readouterr().out

    def test_quantize_needs_m_or_input(self, capsys):
        assert invoke("quantize", "--scheme", "sd:r=1") == 1

    def test_embed_writes_codes_and_figure(self, tmp_path, capsys):
        out = tmp_path / "emb"
        code = invoke(
            "embed", "--n", "64", "--m", "32", "--p", "8", "--points", "5",
            "--scheme", "beta:10/9", "--seed", "2", "--out", str(out),
        )
        assert code == 0
        files = sorted(f.name for f in out.iterdir())
        assert "distances.csv" in files and "distances.png" in files
        assert sum(f.startswith("code_") for f in files) == 5

    def test_embed_auto_p(self, capsys):
        assert invoke("embed", "--n", "64", "--m", "64", "--scheme", "sd:r=1") == 0
        assert "p=" in capsys.readouterr().out

    def test_recover_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "rec"
        code = invoke(
            "recover", "--n", "64", "--m", "64", "--p", "16", "--k", "2",
            "--scheme", "beta:10/9", "--eta-mode", "oracle", "--seed", "4",
            "--out", str(out),
        )
        assert code == 0 and (out / "recovery.csv").exists()
        assert "recovery error" in capsys.readouterr().out

    def test_rip_and_exact(self, capsys):
        assert invoke("rip", "--n", "16", "--m", "8", "--p", "4", "--k", "2",
                      "--trials", "50", "--exact") == 0
        out = capsys.readouterr().out
        assert "sampled delta_hat" in out and "exact delta" in out

    def test_mrip(self, capsys):
        assert invoke("mrip", "--n", "16", "--m", "8", "--p", "4",
                      "--base-alpha", "0.9", "--trials", "30") == 0
        assert "result:" in capsys.readouterr().out

    def test_identity_pass_and_fail_codes(self, capsys):
        assert invoke("identity", "--n", "8", "--m", "8", "--p", "2") == 0

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as exc:
            invoke("embed", "--n", "not-a-number", "--m", "8")
        assert exc.value.code == 1

    def test_value_error_maps_to_usage(self, capsys):
        # hadamard needs power-of-two n
        assert invoke("rip", "--n", "12", "--m", "8", "--p", "4", "--k", "2") == 1

    def test_experiment_config_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "kind=rip-estimate\nn=16\nm=8\np=4\nk=2\ntrials=40\nseed=9\n"
        )
        out = tmp_path / "expout"
        code = invoke("experiment", "--config", str(cfg), "--trials", "10",
                      "--out", str(out))
        assert code == 0
        text = (out / "results.csv").read_text()
        assert ",10," in text.splitlines()[2]  # CLI trials override wins

    def test_experiment_missing_kind(self, capsys):
        assert invoke("experiment", "--n", "8") == 1

    def test_console_entrypoint(self):
        proc = subprocess.run(
            [sys.executable, "-m", "nsq.cli", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0 and "nsq" in proc.stdout
