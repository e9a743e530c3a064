"""
Dataset Service - Resolves --data/--labels/--limit flags into a Dataset.
"""

import logging
from pathlib import Path
from typing import Optional

from core.container import peek_magic
from core.datasets import ACTIVATIONS_MAGIC, Dataset, load_activation_matrix, load_mnist_idx
from core.errors import DimensionError

logger = logging.getLogger(__name__)


def load_dataset(
    data: Path,
    labels: Optional[Path] = None,
    limit: Optional[int] = None,
    seed: int = 0,
) -> Dataset:
    """
    Load a dataset, detecting its format from the file magic.

    Activation containers ("SDLACTS1") are read as-is; anything else is parsed
    as an MNIST IDX image file (optionally gzip-compressed).

    Args:
        data: Dataset file
        labels: Optional IDX label file (MNIST only)
        limit: Keep at most this many samples (class-balanced when labels are given)
        seed: Seed for the stratified subset

    Returns:
        Dataset
    """
    if peek_magic(data) == ACTIVATIONS_MAGIC:
        dataset = load_activation_matrix(data)
        if labels is not None:
            logger.warning(f"Ignoring --labels for activation container {data}")
    else:
        dataset, _ = load_mnist_idx(data, labels)

    if limit is not None and limit < dataset.n:
        dataset = dataset.limit(limit, seed)
        logger.info(f"Using {dataset.n} of the samples in {data}")
    return dataset


def check_width(dataset: Dataset, m: int, what: str = "checkpoint") -> None:
    """
    Raises:
        DimensionError: If the dataset width differs from the model's m
    """
    if dataset.m != m:
        raise DimensionError(f"data has m={dataset.m} but {what} has m={m}")
