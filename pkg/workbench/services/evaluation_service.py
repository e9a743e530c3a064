"""
Evaluation Service - Writes the metric CSV bundle of a checkpoint on a dataset.

Files: r2.csv, babel_dict.csv, babel_coact.csv, activation_stats.csv,
residual_curve.csv (plus run_config.json).
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from core.checkpoint import load_checkpoint
from core.dictionary import Dictionary, EncoderConfig
from core.encoders import SparseCode, encode_batch
from core.errors import NoEligibleSampleError
from core.metrics import (
    QUANTILES,
    activation_stats,
    babel_curve,
    coactivation_babel,
    r_squared,
    residual_curve,
)
from workbench.models.run_config import EvalRunConfig
from workbench.services.dataset_service import check_width, load_dataset
from workbench.services.outputs import prepare_out_dir, write_csv

logger = logging.getLogger(__name__)

EVAL_CHUNK = 1024
COACT_HEADER = ("order", "evaluated", "skipped", "mean", "max") + tuple(f"q{int(q * 100):02d}" for q in QUANTILES)


class EvalResult(BaseModel):
    files: Dict[str, Path]
    r2: Dict[int, float]


def encode_dataset(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    samples: np.ndarray,
    k: Optional[int] = None,
    chunk: int = EVAL_CHUNK,
) -> Tuple[np.ndarray, List[SparseCode]]:
    """Reconstructions and codes of every sample, encoded in chunks (BatchTopK budgets are per chunk)."""
    reconstructions = []
    codes: List[SparseCode] = []
    for start in range(0, samples.shape[0], chunk):
        encoded = encode_batch(dictionary, cfg, samples[start:start + chunk], k=k)
        reconstructions.append(encoded.x_hat)
        codes.extend(encoded.codes())
    return np.vstack(reconstructions), codes


def chunked_residual_curve(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    samples: np.ndarray,
    k_max: int,
    chunk: int = EVAL_CHUNK,
) -> List[float]:
    """residual_curve over the data in chunks, sample-weighted."""
    totals = np.zeros(k_max)
    for start in range(0, samples.shape[0], chunk):
        part = samples[start:start + chunk]
        curve = residual_curve(dictionary, cfg, part, k_max)
        totals += len(part) * np.asarray(curve.mean_errors)
    return (totals / samples.shape[0]).tolist()


class EvaluationService:
    """Computes and writes evaluation metrics."""

    def run(self, config: EvalRunConfig) -> EvalResult:
        """
        Execute `eval`.

        Raises:
            DimensionError: If the data width differs from the checkpoint's m
        """
        out_dir = prepare_out_dir(config, "eval")
        dictionary, cfg, _ = load_checkpoint(config.checkpoint)
        dataset = load_dataset(config.data, config.labels, config.limit, config.seed)
        check_width(dataset, dictionary.m)
        samples = dataset.samples
        files: Dict[str, Path] = {}

        ks = config.ks or [cfg.k]
        r2: Dict[int, float] = {}
        for k in ks:
            x_hat, _ = encode_dataset(dictionary, cfg, samples, k=k)
            r2[k] = r_squared(samples, x_hat)
            logger.info(f"R² at k={k}: {r2[k]:.6f}")
        files["r2"] = write_csv(out_dir / "r2.csv", ("k", "r2"), sorted(r2.items()))

        orders = [r for r in config.babel_orders if r <= dictionary.p - 1]
        if len(orders) < len(config.babel_orders):
            logger.warning(f"Dropping babel orders above p-1={dictionary.p - 1}")
        curve = babel_curve(dictionary.d, orders)
        files["babel_dict"] = write_csv(out_dir / "babel_dict.csv", ("r", "mu1"), zip(curve.orders, curve.values))

        _, codes = encode_dataset(dictionary, cfg, samples)
        files["babel_coact"] = write_csv(
            out_dir / "babel_coact.csv", COACT_HEADER, self._coactivation_rows(codes, dictionary, config.coact_orders)
        )

        stats = activation_stats(codes, dictionary.p)
        files["activation_stats"] = write_csv(
            out_dir / "activation_stats.csv",
            ("atom", "freq", "mean_value", "mean_value_active", "mean_selection_step"),
            zip(
                range(dictionary.p),
                stats.freq.tolist(),
                stats.mean_value.tolist(),
                stats.mean_value_when_active.tolist(),
                stats.mean_selection_step.tolist(),
            ),
        )

        errors = chunked_residual_curve(dictionary, cfg, samples, config.k_max)
        files["residual_curve"] = write_csv(
            out_dir / "residual_curve.csv", ("k", "mean_err"), zip(range(1, config.k_max + 1), errors)
        )
        return EvalResult(files=files, r2=r2)

    def _coactivation_rows(
        self,
        codes: List[SparseCode],
        dictionary: Dictionary,
        orders: List[Optional[int]],
    ) -> List[tuple]:
        rows = []
        for r in orders:
            label = "support-1" if r is None else r
            try:
                summary = coactivation_babel(codes, dictionary.d, r)
            except NoEligibleSampleError as e:
                logger.warning(f"Co-activation babel at order {label}: {e}")
                rows.append((label, 0, len(codes)) + (float("nan"),) * (2 + len(QUANTILES)))
                continue
            rows.append((label, summary.evaluated, summary.skipped, summary.mean, summary.max, *summary.quantiles))
        return rows


# Global evaluation service instance
_evaluation_service: Optional[EvaluationService] = None


def get_evaluation_service() -> EvaluationService:
    """
    Get the global evaluation service instance.

    Returns:
        EvaluationService instance
    """
    global _evaluation_service

    if _evaluation_service is None:
        _evaluation_service = EvaluationService()

    return _evaluation_service
