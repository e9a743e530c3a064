"""
Training Service - Initializes, trains and saves dictionaries.
"""

import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel

from core.checkpoint import save_checkpoint
from core.datasets import Dataset
from core.dictionary import Dictionary, EncoderConfig, init_dictionary
from core.gradients import LossBreakdown, batch_loss
from core.numeric import derive_seed, make_rng
from core.trainer import TrainingLog, train
from workbench.models.run_config import OptimizerParams, TrainRunConfig
from workbench.services.dataset_service import load_dataset
from workbench.services.outputs import prepare_out_dir, write_csv

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.sdl"
TRAIN_LOG_FILE = "train_log.csv"
EPOCH_SUMMARY_FILE = "epoch_summary.csv"


class TrainResult(BaseModel):
    """Files written by a training run plus its final loss on the training data."""

    checkpoint: Path
    log: Path
    epoch_summary: Path
    final_loss: LossBreakdown
    steps: int


def dataset_loss(dictionary: Dictionary, cfg: EncoderConfig, samples: np.ndarray, batch_size: int) -> LossBreakdown:
    """Sample-weighted mean loss over the data in batches (no aux term)."""
    totals = np.zeros(4)
    n = samples.shape[0]
    for start in range(0, n, batch_size):
        chunk = samples[start:start + batch_size]
        loss = batch_loss(dictionary, cfg, chunk)
        totals += len(chunk) * np.array([loss.recon, loss.sparsity_penalty, loss.aux, loss.l0])
    recon, sparsity, aux, l0 = (totals / n).tolist()
    return LossBreakdown.from_terms(recon=recon, sparsity_penalty=sparsity, aux=aux, l0=l0)


class TrainingService:
    """Runs the trainer for CLI commands and sweep cells."""

    def train_model(
        self,
        dataset: Dataset,
        cfg: EncoderConfig,
        p: int,
        optimizer: OptimizerParams,
        seed: int,
    ) -> Tuple[Dictionary, TrainingLog]:
        """
        Initialize a dictionary from the run seed and train it.

        Initialization and shuffling draw from independent streams derived
        from the seed, so a run is a pure function of (seed, config, data).
        """
        cfg.check_against(p)
        initial = init_dictionary(dataset.m, p, make_rng(derive_seed(seed, "init")), dataset.mean, cfg)
        return train(
            initial,
            cfg,
            dataset.samples,
            epochs=optimizer.epochs,
            batch_size=optimizer.batch_size,
            seed=seed,
            schedule=optimizer.schedule(dataset.n),
            hyper=optimizer.adam(),
            log_every=optimizer.log_every,
        )

    def run(self, config: TrainRunConfig, dataset: Optional[Dataset] = None) -> TrainResult:
        """
        Execute `train`: checkpoint, training log and epoch summary in config.out_dir.

        Args:
            config: Validated train parameters
            dataset: Preloaded data; loaded from config.data when None

        Returns:
            TrainResult
        """
        out_dir = prepare_out_dir(config, "train")
        if dataset is None:
            dataset = load_dataset(config.data, config.labels, config.limit, config.seed)
        cfg = config.encoder()

        dictionary, log = self.train_model(dataset, cfg, config.p, config, config.seed)

        metadata = {
            "seed": config.seed,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "steps": log.steps,
            "n": dataset.n,
            "source": dataset.source,
        }
        checkpoint_path = out_dir / CHECKPOINT_FILE
        save_checkpoint(dictionary, cfg, metadata, checkpoint_path)

        log_path = out_dir / TRAIN_LOG_FILE
        log.write_csv(log_path)
        summary_path = write_csv(
            out_dir / EPOCH_SUMMARY_FILE,
            ("epoch", "recon", "total", "mean_l0", "dead_atoms"),
            [(s.epoch, s.recon, s.total, s.mean_l0, s.dead_atoms) for s in log.epochs],
        )

        final_loss = dataset_loss(dictionary, cfg, dataset.samples, config.batch_size)
        logger.info(
            f"Finished training: recon={final_loss.recon:.6g} sparsity={final_loss.sparsity_penalty:.6g} "
            f"l0={final_loss.l0:.3g}"
        )
        return TrainResult(
            checkpoint=checkpoint_path,
            log=log_path,
            epoch_summary=summary_path,
            final_loss=final_loss,
            steps=log.steps,
        )


# Global training service instance
_training_service: Optional[TrainingService] = None


def get_training_service() -> TrainingService:
    """
    Get the global training service instance.

    Returns:
        TrainingService instance
    """
    global _training_service

    if _training_service is None:
        _training_service = TrainingService()

    return _training_service
