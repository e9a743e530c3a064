"""
Tests for the service layer - Co-activation rows of the eval bundle and the
sweep worker protocol.
"""

import math
import pickle
from pathlib import Path

import numpy as np
import pytest

from core.datasets import Dataset
from core.dictionary import Dictionary, Variant
from core.encoders import SparseCode
from core.errors import InvariantError
from core.numeric import make_rng
from workbench.models.run_config import SweepRunConfig
from workbench.services.evaluation_service import COACT_HEADER, EvaluationService
from workbench.services.sweep_service import SweepCell, grid_cells, init_worker, reset_worker, run_cell


@pytest.fixture
def worker_data():
    """Small dataset installed as the sweep worker's shared data."""
    samples = make_rng(2).standard_normal((2000, 5))
    dataset = Dataset(samples=samples, source="memory")
    init_worker(dataset, dataset)
    yield dataset
    reset_worker()


def _sweep_config(**overrides):
    params = dict(data=Path("unused.sdla"), epochs=1, batch_size=500, ks=[2], ps=[6], variants=[Variant.TOPK])
    params.update(overrides)
    return SweepRunConfig(**params)


class TestCoactivationRows:
    """Test cases for EvaluationService._coactivation_rows."""

    def test_no_eligible_sample_writes_nan_row(self):
        """Test that single-atom codes give an evaluated = 0 row of NaNs."""
        dictionary = Dictionary(d=np.eye(3), b_pre=np.zeros(3))
        codes = [SparseCode(p=3, indices=np.array([i]), values=np.ones(1)) for i in range(3)]
        (row,) = EvaluationService()._coactivation_rows(codes, dictionary, [1])
        assert len(row) == len(COACT_HEADER)
        assert row[:3] == (1, 0, 3)
        assert all(math.isnan(value) for value in row[3:])

    def test_unnormalized_dictionary_raises(self):
        """Test that non-unit atoms surface instead of becoming a NaN row."""
        dictionary = Dictionary(d=2.0 * np.eye(3), b_pre=np.zeros(3))
        codes = [SparseCode(p=3, indices=np.array([0, 1]), values=np.ones(2))]
        with pytest.raises(InvariantError):
            EvaluationService()._coactivation_rows(codes, dictionary, [1])


class TestSweepWorker:
    """Test cases for the sweep cell runner."""

    def test_jobs_carry_no_data(self, worker_data):
        """Test that a pickled job is far smaller than the dataset it trains on."""
        config = _sweep_config()
        job = (config, grid_cells(config)[0])
        assert len(pickle.dumps(job)) < worker_data.samples.nbytes

    def test_run_cell_uses_worker_data(self, worker_data):
        """Test one scored row per cell from the installed datasets."""
        config = _sweep_config()
        row = run_cell((config, SweepCell(variant=Variant.TOPK, k=2, p=6, seed=0)))
        assert (row.variant, row.k, row.p, row.seed) == (Variant.TOPK, 2, 6, 0)
        assert np.isfinite(row.r2)

    def test_uninitialized_worker(self):
        """Test that a cell without installed datasets is refused."""
        reset_worker()
        config = _sweep_config()
        with pytest.raises(RuntimeError, match="init_worker"):
            run_cell((config, grid_cells(config)[0]))
