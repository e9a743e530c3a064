"""
Tests for the training loop.
"""

import numpy as np
import pytest

from core.datasets import SyntheticSpec, generate_synthetic
from core.dictionary import EncoderConfig, Variant, init_dictionary
from core.errors import NumericError
from core.numeric import make_rng
from core.optimizer import LRSchedule
from core.trainer import LOG_COLUMNS, batches_per_epoch, default_schedule, train


@pytest.fixture
def synthetic_data():
    spec = SyntheticSpec(m=8, p_true=6, k_true=2, n=64, coherence_mode="orthogonal", noise_sigma=0.01, seed=3)
    dataset, _, _ = generate_synthetic(spec)
    return dataset


def _setup(dataset, variant, p=12, k=2):
    cfg = EncoderConfig(variant=variant, k=k)
    dictionary = init_dictionary(dataset.m, p, make_rng(1), dataset.mean, cfg)
    return dictionary, cfg


def _fast_schedule(dataset, epochs, batch_size):
    total = batches_per_epoch(dataset.n, batch_size) * epochs
    return LRSchedule(lr_init=1e-2, lr_final=1e-3, warmup_steps=0, total_steps=total)


class TestScheduleHelpers:
    """Test cases for batch counting and the default schedule."""

    def test_batches_per_epoch(self):
        """Test that a short last batch counts."""
        assert batches_per_epoch(10, 3) == 4
        assert batches_per_epoch(9, 3) == 3

    def test_default_warmup_is_one_epoch(self):
        """Test warmup = batches per epoch and total = epochs x batches."""
        schedule = default_schedule(100, 5, 10)
        assert schedule.warmup_steps == 10
        assert schedule.total_steps == 50


class TestTrain:
    """Test cases for train."""

    def test_zero_epochs_returns_input(self, synthetic_data):
        """Test that epochs = 0 returns the initial dictionary and an empty log."""
        dictionary, cfg = _setup(synthetic_data, Variant.MP)
        trained, log = train(dictionary, cfg, synthetic_data.samples, epochs=0, batch_size=16, seed=0)
        assert trained is dictionary
        assert log.rows == [] and log.steps == 0

    def test_same_seed_same_result(self, synthetic_data):
        """Test bitwise-identical dictionaries and logs for equal seeds."""
        dictionary, cfg = _setup(synthetic_data, Variant.TOPK)
        first, first_log = train(dictionary, cfg, synthetic_data.samples, epochs=2, batch_size=16, seed=5)
        second, second_log = train(dictionary, cfg, synthetic_data.samples, epochs=2, batch_size=16, seed=5)
        assert np.array_equal(first.d, second.d)
        assert np.array_equal(first.encoder_weights, second.encoder_weights)
        assert first_log == second_log

    def test_seed_changes_shuffling(self, synthetic_data):
        """Test that a different seed gives a different model."""
        dictionary, cfg = _setup(synthetic_data, Variant.MP)
        first, _ = train(dictionary, cfg, synthetic_data.samples, epochs=1, batch_size=16, seed=1)
        second, _ = train(dictionary, cfg, synthetic_data.samples, epochs=1, batch_size=16, seed=2)
        assert not np.array_equal(first.d, second.d)

    @pytest.mark.parametrize("variant", [Variant.MP, Variant.TOPK, Variant.RELU])
    def test_reconstruction_improves(self, synthetic_data, variant):
        """Test that the last epoch reconstructs better than the first."""
        dictionary, cfg = _setup(synthetic_data, variant)
        schedule = _fast_schedule(synthetic_data, 8, 16)
        trained, log = train(dictionary, cfg, synthetic_data.samples, epochs=8, batch_size=16, seed=0, schedule=schedule)
        assert log.epochs[-1].recon < log.epochs[0].recon
        assert trained.is_normalized()

    def test_input_dictionary_untouched(self, synthetic_data):
        """Test that training works on a copy."""
        dictionary, cfg = _setup(synthetic_data, Variant.MP)
        before = dictionary.d.copy()
        train(dictionary, cfg, synthetic_data.samples, epochs=1, batch_size=16, seed=0)
        assert np.array_equal(dictionary.d, before)

    def test_log_cadence(self, synthetic_data):
        """Test rows every log_every steps plus the final step."""
        dictionary, cfg = _setup(synthetic_data, Variant.MP)
        # 64 samples / 20 per batch = 4 steps per epoch, 12 in total
        _, log = train(dictionary, cfg, synthetic_data.samples, epochs=3, batch_size=20, seed=0, log_every=5)
        assert [row.step for row in log.rows] == [5, 10, 12]
        assert log.steps == 12
        assert [summary.epoch for summary in log.epochs] == [1, 2, 3]

    def test_log_csv(self, synthetic_data, tmp_path):
        """Test the training-log header and row count."""
        dictionary, cfg = _setup(synthetic_data, Variant.MP)
        _, log = train(dictionary, cfg, synthetic_data.samples, epochs=1, batch_size=16, seed=0, log_every=1)
        path = tmp_path / "train_log.csv"
        log.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(LOG_COLUMNS)
        assert len(lines) == 1 + 4

    def test_empty_dataset(self):
        """Test that N = 0 is rejected."""
        cfg = EncoderConfig(variant=Variant.MP, k=1)
        dictionary = init_dictionary(2, 2, make_rng(0), np.zeros(2), cfg)
        with pytest.raises(ValueError):
            train(dictionary, cfg, np.zeros((0, 2)), epochs=1, batch_size=4, seed=0)

    def test_non_finite_loss_names_epoch_and_batch(self):
        """Test that a NaN batch reports its epoch and batch coordinates."""
        cfg = EncoderConfig(variant=Variant.MP, k=1)
        dictionary = init_dictionary(2, 2, make_rng(0), np.zeros(2), cfg)
        with np.errstate(invalid="ignore"):
            with pytest.raises(NumericError, match="epoch 1, batch 0"):
                train(dictionary, cfg, np.full((4, 2), np.nan), epochs=1, batch_size=4, seed=0)

    def test_jumprelu_default_settings(self):
        """Test a JumpReLU run at default settings keeps thresholds non-negative."""
        cfg = EncoderConfig(variant=Variant.JUMPRELU, target_l0=1e-6)
        dictionary = init_dictionary(8, 16, make_rng(0), np.zeros(8), cfg)
        samples = make_rng(1).standard_normal((256, 8))
        trained, log = train(dictionary, cfg, samples, epochs=3, batch_size=32, seed=0)
        assert log.steps == 24
        assert trained.thresholds is not None
        assert np.all(trained.thresholds >= 0.0)
        assert trained.is_normalized()
