"""
Sweep Service - Trains and scores a (variant, k, p, seed) grid.

Cells run in grid order, either inline or in a process pool whose workers
receive the datasets once through the pool initializer; results are
merged in grid order, so sweep.csv does not depend on the worker count.
"""

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel

from core.datasets import Dataset
from core.dictionary import Variant
from core.metrics import r_squared
from workbench.models.run_config import SweepRunConfig
from workbench.services.dataset_service import check_width, load_dataset
from workbench.services.evaluation_service import encode_dataset
from workbench.services.outputs import prepare_out_dir, write_csv
from workbench.services.training_service import get_training_service

logger = logging.getLogger(__name__)

SWEEP_HEADER = ("variant", "k", "p", "seed", "r2")


class SweepCell(BaseModel):
    variant: Variant
    k: int
    p: int
    seed: int


class SweepRow(SweepCell):
    r2: float


def grid_cells(config: SweepRunConfig) -> List[SweepCell]:
    """Cells in grid order: variant, then k, then p, then seed."""
    return [
        SweepCell(variant=variant, k=k, p=p, seed=seed)
        for variant, k, p, seed in itertools.product(config.variants, config.ks, config.ps, config.seeds)
    ]


# Datasets shared by every cell of the running sweep; set once per worker process
_worker_data: Optional[Tuple[Dataset, Dataset]] = None


def init_worker(train_set: Dataset, eval_set: Dataset) -> None:
    """Pool initializer: ship the datasets once per process instead of once per cell."""
    global _worker_data
    _worker_data = (train_set, eval_set)


def reset_worker() -> None:
    global _worker_data
    _worker_data = None


def run_cell(job: Tuple[SweepRunConfig, SweepCell]) -> SweepRow:
    """Train one cell and score it (top-level so process pools can pickle it)."""
    if _worker_data is None:
        raise RuntimeError("sweep worker has no datasets; call init_worker first")
    config, cell = job
    train_set, eval_set = _worker_data
    cfg = config.encoder_config(cell.variant, cell.k)
    dictionary, _ = get_training_service().train_model(train_set, cfg, cell.p, config, cell.seed)
    x_hat, _ = encode_dataset(dictionary, cfg, eval_set.samples)
    r2 = r_squared(eval_set.samples, x_hat)
    logger.info(f"Sweep cell {cell.variant.value} k={cell.k} p={cell.p} seed={cell.seed}: R²={r2:.6f}")
    return SweepRow(**cell.model_dump(), r2=r2)


class SweepService:
    """Runs training grids."""

    def run(self, config: SweepRunConfig) -> Path:
        """
        Execute `sweep` and write sweep.csv.

        Returns:
            Path of sweep.csv
        """
        out_dir = prepare_out_dir(config, "sweep")
        train_set = load_dataset(config.data, config.labels, config.limit, config.seed)
        eval_set = train_set
        if config.eval_data is not None:
            eval_set = load_dataset(config.eval_data, config.eval_labels, config.eval_limit, config.seed)
            check_width(eval_set, train_set.m, what="training data")

        cells = grid_cells(config)
        jobs = [(config, cell) for cell in cells]
        logger.info(f"Sweeping {len(cells)} cells with {config.workers} worker(s)")

        if config.workers == 1:
            init_worker(train_set, eval_set)
            try:
                rows = [run_cell(job) for job in jobs]
            finally:
                reset_worker()
        else:
            pool = ProcessPoolExecutor(
                max_workers=config.workers, initializer=init_worker, initargs=(train_set, eval_set)
            )
            with pool:
                rows = list(pool.map(run_cell, jobs))

        return write_csv(
            out_dir / "sweep.csv",
            SWEEP_HEADER,
            [(row.variant.value, row.k, row.p, row.seed, row.r2) for row in rows],
        )


# Global sweep service instance
_sweep_service: Optional[SweepService] = None


def get_sweep_service() -> SweepService:
    """
    Get the global sweep service instance.

    Returns:
        SweepService instance
    """
    global _sweep_service

    if _sweep_service is None:
        _sweep_service = SweepService()

    return _sweep_service
