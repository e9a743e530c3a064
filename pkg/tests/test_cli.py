"""
Tests for the command-line workflow - Parsing, config layering, exit codes and
end-to-end runs on a small synthetic dataset.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from core.checkpoint import load_checkpoint
from core.datasets import load_activation_matrix
from core.errors import ConfigError
from workbench.cli.commands import build_run_config, load_config_file
from workbench.cli.parser import build_parser, int_list, k_max_from_sweep, order_list
from workbench.config import Settings
from workbench.main import EXIT_IO, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main

pytestmark = pytest.mark.usefixtures("isolated_settings")


def _lines(path):
    return Path(path).read_text().splitlines()


@pytest.fixture
def synthetic_run(isolated_settings):
    """gen-synthetic (m = 9) followed by a short MP training run."""
    assert main([
        "gen-synthetic", "--m", "9", "--p-true", "6", "--k-true", "2", "--n", "60",
        "--coherence-mode", "orthogonal", "--noise-sigma", "0.01", "--seed", "4", "--out-dir", "synth",
    ]) == EXIT_OK
    assert main([
        "train", "--data", "synth/samples.sdla", "--variant", "mp", "--k", "2", "--p", "8",
        "--epochs", "2", "--batch-size", "16", "--lr-init", "0.01", "--out-dir", "run",
    ]) == EXIT_OK
    return isolated_settings


class TestParserHelpers:
    """Test cases for list-valued flag parsers."""

    def test_int_list(self):
        """Test comma lists and ranges."""
        assert int_list("1,2,5") == [1, 2, 5]
        assert int_list("3..5") == [3, 4, 5]
        assert int_list("1, 4..5") == [1, 4, 5]

    def test_order_list(self):
        """Test that "support" maps to None."""
        assert order_list("1,support") == [1, None]

    def test_k_sweep(self):
        """Test that 1..K yields K."""
        assert k_max_from_sweep("1..50") == 50
        assert k_max_from_sweep("7") == 7

    def test_unset_flags_absent(self):
        """Test that only passed flags reach the namespace."""
        args = build_parser().parse_args(["train", "--data", "x.sdla", "--k", "3"])
        assert vars(args) == {"command": "train", "data": "x.sdla", "k": 3}


class TestConfigLayering:
    """Test cases for build_run_config precedence."""

    def test_flags_over_config_file_over_settings(self, isolated_settings):
        """Test flag > --config command section > --config top level > settings."""
        path = isolated_settings / "run.yaml"
        path.write_text("epochs: 3\nbatch-size: 8\np: 20\ntrain:\n  epochs: 4\n  variant: topk\n")
        args = build_parser().parse_args(["train", "--data", "x.sdla", "--config", str(path), "--p", "30"])
        config = build_run_config("train", args, Settings(k=5))
        assert config.epochs == 4
        assert config.batch_size == 8
        assert config.p == 30
        assert config.k == 5
        assert config.variant.value == "topk"

    def test_config_file_must_be_mapping(self, isolated_settings):
        """Test that a YAML list is rejected."""
        path = isolated_settings / "bad.yaml"
        path.write_text("- 1\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config_file(path, "train")

    def test_sweep_inherits_settings_grid(self):
        """Test that sweep axes default to the single settings values."""
        args = build_parser().parse_args(["sweep", "--data", "x.sdla"])
        config = build_run_config("sweep", args, Settings(k=4, p=16, variant="topk"))
        assert config.ks == [4] and config.ps == [16]
        assert [v.value for v in config.variants] == ["topk"]


class TestExitCodes:
    """Test cases for failure reporting."""

    def test_k_zero(self, capsys):
        """Test that --k 0 exits 2 naming the flag."""
        assert main(["train", "--data", "missing.sdla", "--k", "0"]) == EXIT_VALIDATION
        assert "--k: k ≥ 1" in capsys.readouterr().err

    def test_k_above_p(self, capsys):
        """Test that k > p is a validation error."""
        assert main(["train", "--data", "missing.sdla", "--k", "20", "--p", "10"]) == EXIT_VALIDATION
        assert "k ≤ p" in capsys.readouterr().err

    def test_missing_data_file(self):
        """Test that an absent dataset exits 4."""
        assert main(["train", "--data", "missing.sdla", "--k", "2", "--p", "4", "--epochs", "1"]) == EXIT_IO

    def test_corrupt_checkpoint(self, synthetic_run):
        """Test that a damaged checkpoint exits 4."""
        Path("broken.sdl").write_bytes(b"NOTACKPT" + b"\x00" * 16)
        code = main(["eval", "--checkpoint", "broken.sdl", "--data", "synth/samples.sdla", "--out-dir", "e"])
        assert code == EXIT_IO

    def test_sample_out_of_range(self, synthetic_run):
        """Test that an inspect index beyond N exits 3."""
        code = main([
            "inspect", "--checkpoint", "run/checkpoint.sdl", "--data", "synth/samples.sdla",
            "--samples", "999", "--out-dir", "i",
        ])
        assert code == EXIT_RUNTIME

    def test_width_mismatch(self, synthetic_run):
        """Test that data of the wrong width exits 3."""
        assert main([
            "gen-synthetic", "--m", "4", "--p-true", "4", "--k-true", "1", "--n", "5", "--out-dir", "narrow",
        ]) == EXIT_OK
        code = main(["eval", "--checkpoint", "run/checkpoint.sdl", "--data", "narrow/samples.sdla", "--out-dir", "e"])
        assert code == EXIT_RUNTIME

    def test_top_n_above_p(self, synthetic_run):
        """Test that --top-n > p exits 2."""
        assert main(["export-atoms", "--checkpoint", "run/checkpoint.sdl", "--top-n", "50", "--out-dir", "x"]) == EXIT_VALIDATION


class TestWorkflow:
    """End-to-end runs of every command."""

    def test_gen_synthetic_outputs(self, synthetic_run):
        """Test samples, codes and the ground-truth checkpoint."""
        samples = load_activation_matrix("synth/samples.sdla")
        codes = load_activation_matrix("synth/codes.sdla")
        truth, cfg, _ = load_checkpoint("synth/truth.sdl")
        assert samples.samples.shape == (60, 9)
        assert codes.samples.shape == (60, 6)
        assert truth.d.shape == (9, 6) and cfg.k == 2

    def test_train_outputs(self, synthetic_run):
        """Test checkpoint, logs and the echoed run config."""
        dictionary, cfg, metadata = load_checkpoint("run/checkpoint.sdl")
        assert dictionary.d.shape == (9, 8)
        assert cfg.variant.value == "mp" and cfg.k == 2
        assert metadata["steps"] == 8
        assert _lines("run/train_log.csv")[0].startswith("step,epoch,lr,recon")
        assert len(_lines("run/epoch_summary.csv")) == 3
        run_config = json.loads(Path("run/run_config.json").read_text())
        assert run_config["command"] == "train" and run_config["p"] == 8

    def test_train_is_reproducible(self, synthetic_run):
        """Test byte-identical checkpoints and logs for a repeated run."""
        assert main([
            "train", "--data", "synth/samples.sdla", "--variant", "mp", "--k", "2", "--p", "8",
            "--epochs", "2", "--batch-size", "16", "--lr-init", "0.01", "--out-dir", "again",
        ]) == EXIT_OK
        assert Path("again/checkpoint.sdl").read_bytes() == Path("run/checkpoint.sdl").read_bytes()
        assert Path("again/train_log.csv").read_bytes() == Path("run/train_log.csv").read_bytes()

    def test_eval_bundle(self, synthetic_run):
        """Test every metric file and its shape."""
        assert main([
            "eval", "--checkpoint", "run/checkpoint.sdl", "--data", "synth/samples.sdla",
            "--ks", "1,2", "--babel-orders", "1,2", "--coact-orders", "1,support", "--k-sweep", "1..5",
            "--out-dir", "eval",
        ]) == EXIT_OK
        assert _lines("eval/r2.csv")[0] == "k,r2"
        assert len(_lines("eval/r2.csv")) == 3
        assert len(_lines("eval/babel_dict.csv")) == 3
        coact = _lines("eval/babel_coact.csv")
        assert coact[0] == "order,evaluated,skipped,mean,max,q05,q25,q50,q75,q95"
        assert coact[2].startswith("support-1,")
        assert len(_lines("eval/activation_stats.csv")) == 1 + 8
        curve = [float(line.split(",")[1]) for line in _lines("eval/residual_curve.csv")[1:]]
        assert len(curve) == 5
        assert all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))

    def test_inspect(self, synthetic_run):
        """Test trace, partials and the PGM strip for square inputs."""
        assert main([
            "inspect", "--checkpoint", "run/checkpoint.sdl", "--data", "synth/samples.sdla",
            "--samples", "0,3", "--k", "3", "--out-dir", "ins",
        ]) == EXIT_OK
        trace = _lines("ins/sample_3_trace.csv")
        assert trace[0] == "step,atom,coefficient,residual_norm"
        assert 2 <= len(trace) <= 1 + 1 + 3
        assert Path("ins/sample_0_strip.pgm").read_bytes().startswith(b"P5\n")
        partials = _lines("ins/sample_0_partials.csv")
        assert partials[1].split(",")[0] == "0"

    def test_export_with_and_without_data(self, synthetic_run):
        """Test ranked grids with data and index order without."""
        assert main([
            "export-atoms", "--checkpoint", "run/checkpoint.sdl", "--data", "synth/samples.sdla",
            "--top-n", "4", "--out-dir", "atoms",
        ]) == EXIT_OK
        assert Path("atoms/atoms_by_frequency.pgm").exists()
        assert Path("atoms/atoms_by_value.pgm").exists()
        assert len(_lines("atoms/atom_ranking.csv")) == 1 + 4

        assert main(["export-atoms", "--checkpoint", "run/checkpoint.sdl", "--top-n", "4", "--out-dir", "plain"]) == EXIT_OK
        assert Path("plain/atoms_by_index.pgm").exists()

    def test_recovery_score(self, synthetic_run):
        """Test that recovery.csv holds one scored row."""
        assert main([
            "recovery-score", "--checkpoint", "run/checkpoint.sdl", "--truth", "synth/truth.sdl", "--out-dir", "rec",
        ]) == EXIT_OK
        lines = _lines("rec/recovery.csv")
        assert lines[0] == "threshold,matched_fraction,mean_best_cosine"
        matched = float(lines[1].split(",")[1])
        assert 0.0 <= matched <= 1.0

    def test_truth_recovers_itself(self, synthetic_run):
        """Test a perfect score for the ground truth against itself."""
        assert main([
            "recovery-score", "--checkpoint", "synth/truth.sdl", "--truth", "synth/truth.sdl", "--out-dir", "self",
        ]) == EXIT_OK
        assert _lines("self/recovery.csv")[1].split(",")[1] == "1.0"

    def test_sweep(self, synthetic_run):
        """Test one row per cell in grid order."""
        assert main([
            "sweep", "--data", "synth/samples.sdla", "--variants", "mp,topk", "--ks", "1,2", "--ps", "6",
            "--seeds", "0", "--epochs", "1", "--batch-size", "30", "--out-dir", "sw",
        ]) == EXIT_OK
        rows = [line.split(",") for line in _lines("sw/sweep.csv")]
        assert rows[0] == ["variant", "k", "p", "seed", "r2"]
        assert [(row[0], row[1]) for row in rows[1:]] == [("mp", "1"), ("mp", "2"), ("topk", "1"), ("topk", "2")]
        assert all(np.isfinite(float(row[4])) for row in rows[1:])

    def test_sweep_workers_match_inline(self, synthetic_run):
        """Test that a process pool writes the same sweep.csv as the inline run."""
        common = [
            "sweep", "--data", "synth/samples.sdla", "--variants", "mp,jumprelu", "--ks", "2", "--ps", "6",
            "--seeds", "0,1", "--epochs", "1", "--batch-size", "30",
        ]
        assert main(common + ["--workers", "1", "--out-dir", "inline"]) == EXIT_OK
        assert main(common + ["--workers", "2", "--out-dir", "pooled"]) == EXIT_OK
        assert _lines("pooled/sweep.csv") == _lines("inline/sweep.csv")
        assert len(_lines("inline/sweep.csv")) == 1 + 4

    def test_jumprelu_train(self, synthetic_run):
        """Test a JumpReLU run writes a checkpoint with non-negative thresholds."""
        assert main([
            "train", "--data", "synth/samples.sdla", "--variant", "jumprelu", "--p", "12",
            "--epochs", "2", "--batch-size", "16", "--out-dir", "jump",
        ]) == EXIT_OK
        dictionary, cfg, _ = load_checkpoint("jump/checkpoint.sdl")
        assert cfg.variant.value == "jumprelu"
        assert np.all(dictionary.thresholds >= 0.0)
        assert dictionary.is_normalized()
