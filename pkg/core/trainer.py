"""
Trainer - Mini-batch training loop for every encoder variant.

Per batch: forward/backward (core.gradients) -> Adam update with decoder
renormalization (core.optimizer) -> usage-counter update. Shuffling is seeded
per epoch, so identical (seed, config, data) give identical logs and models.
"""

import csv
import logging
import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel

from core.dictionary import Dictionary, EncoderConfig
from core.errors import NumericError
from core.gradients import forward_backward
from core.numeric import DenseMatrix, derive_seed, make_rng
from core.optimizer import AdamHyper, LRSchedule, TrainState, adam_step, lr_at, update_usage

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "epoch", "lr", "recon", "sparsity_penalty", "aux", "total", "mean_l0", "dead_atoms")


class LogRow(BaseModel):
    """One training-log line."""

    step: int
    epoch: int
    lr: float
    recon: float
    sparsity_penalty: float
    aux: float
    total: float
    mean_l0: float
    dead_atoms: int


class EpochSummary(BaseModel):
    """Sample-weighted epoch means of the batch losses."""

    epoch: int
    recon: float
    total: float
    mean_l0: float
    dead_atoms: int


class TrainingLog(BaseModel):
    rows: List[LogRow] = []
    epochs: List[EpochSummary] = []
    steps: int = 0

    def write_csv(self, path: Union[str, Path]) -> None:
        """Write rows with the fixed header; floats use repr so reruns are byte-identical."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(LOG_COLUMNS)
            for row in self.rows:
                writer.writerow([_format_cell(getattr(row, column)) for column in LOG_COLUMNS])


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def batches_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def default_schedule(
    n: int,
    epochs: int,
    batch_size: int,
    lr_init: float = 5e-4,
    lr_final: float = 1e-6,
    warmup_steps: Optional[int] = None,
) -> LRSchedule:
    """Schedule over the whole run; warmup defaults to one epoch of steps."""
    per_epoch = batches_per_epoch(n, batch_size)
    total = per_epoch * epochs
    warmup = per_epoch if warmup_steps is None else warmup_steps
    return LRSchedule(lr_init=lr_init, lr_final=lr_final, warmup_steps=min(warmup, total), total_steps=total)


def train(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    samples: DenseMatrix,
    epochs: int,
    batch_size: int,
    seed: int,
    schedule: Optional[LRSchedule] = None,
    hyper: Optional[AdamHyper] = None,
    log_every: int = 10,
) -> Tuple[Dictionary, TrainingLog]:
    """
    Train a dictionary.

    Args:
        dictionary: Initial parameters (left unchanged)
        cfg: Encoder config
        samples: Training data (N x m), N ≥ 1
        epochs: Passes over the data; 0 returns the input unchanged
        batch_size: Samples per update; the last batch of an epoch may be smaller
        seed: Shuffling seed
        schedule: Learning-rate schedule; default_schedule(...) when None
        hyper: Adam hyperparameters
        log_every: Log one row every this many updates (and after the final update)

    Returns:
        Tuple of (trained normalized Dictionary, TrainingLog)

    Raises:
        ValueError: On an empty dataset or non-positive batch size / log cadence
        NumericError: Non-finite loss, naming epoch and batch
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if batch_size < 1 or log_every < 1:
        raise ValueError(f"batch_size and log_every must be ≥ 1 (got {batch_size}, {log_every})")
    if epochs < 0:
        raise ValueError(f"epochs must be ≥ 0, got {epochs}")
    dictionary.check_config(cfg)
    cfg.check_against(dictionary.p)

    log = TrainingLog()
    if epochs == 0:
        return dictionary, log

    schedule = schedule or default_schedule(n, epochs, batch_size)
    state = TrainState.for_dictionary(dictionary, schedule, hyper)
    per_epoch = batches_per_epoch(n, batch_size)
    total_steps = per_epoch * epochs
    use_aux = cfg.resolved_aux_alpha() > 0

    logger.info(
        f"Training {cfg.variant.value} (m={dictionary.m}, p={dictionary.p}, k={cfg.k}) on {n} samples: "
        f"{epochs} epochs x {per_epoch} batches of {batch_size}"
    )

    current = dictionary.copy()
    for epoch in range(1, epochs + 1):
        order = make_rng(derive_seed(seed, "shuffle", epoch)).permutation(n)
        recon_sum = total_sum = l0_sum = 0.0

        for batch_index in range(per_epoch):
            rows = order[batch_index * batch_size:(batch_index + 1) * batch_size]
            batch = samples[rows]
            dead = state.dead_mask(cfg.dead_steps_threshold) if use_aux else None

            try:
                result = forward_backward(current, cfg, batch, dead)
            except NumericError as e:
                raise NumericError(f"epoch {epoch}, batch {batch_index}: {e}") from e

            lr = lr_at(state.step + 1, schedule)
            current = adam_step(state, current, result.grads, cfg)
            update_usage(state, result.encoded.mask.any(axis=0))

            loss = result.loss
            recon_sum += loss.recon * len(rows)
            total_sum += loss.total * len(rows)
            l0_sum += loss.l0 * len(rows)

            if state.step % log_every == 0 or state.step == total_steps:
                row = LogRow(
                    step=state.step,
                    epoch=epoch,
                    lr=lr,
                    recon=loss.recon,
                    sparsity_penalty=loss.sparsity_penalty,
                    aux=loss.aux,
                    total=loss.total,
                    mean_l0=loss.l0,
                    dead_atoms=int(state.dead_mask(cfg.dead_steps_threshold).sum()),
                )
                log.rows.append(row)
                logger.debug(f"step {row.step}: recon={row.recon:.6g} total={row.total:.6g} l0={row.mean_l0:.3g}")

        summary = EpochSummary(
            epoch=epoch,
            recon=recon_sum / n,
            total=total_sum / n,
            mean_l0=l0_sum / n,
            dead_atoms=int(state.dead_mask(cfg.dead_steps_threshold).sum()),
        )
        log.epochs.append(summary)
        logger.info(
            f"Epoch {epoch}/{epochs}: recon={summary.recon:.6g} total={summary.total:.6g} "
            f"l0={summary.mean_l0:.3g} dead={summary.dead_atoms}"
        )

    log.steps = state.step
    return current, log
