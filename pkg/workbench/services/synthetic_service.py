"""
Synthetic Service - Ground-truth data generation and dictionary recovery scoring.
"""

import logging
from pathlib import Path
from typing import Dict, Optional

from core.checkpoint import load_checkpoint, save_checkpoint
from core.datasets import RecoveryScore, generate_synthetic, recovery_score, save_activation_matrix
from core.dictionary import EncoderConfig, Variant
from workbench.models.run_config import RecoveryRunConfig, SyntheticRunConfig
from workbench.services.outputs import prepare_out_dir, write_csv

logger = logging.getLogger(__name__)

SAMPLES_FILE = "samples.sdla"
CODES_FILE = "codes.sdla"
TRUTH_FILE = "truth.sdl"


class SyntheticService:
    """Writes synthetic datasets and scores recovered dictionaries."""

    def generate(self, config: SyntheticRunConfig) -> Dict[str, Path]:
        """
        Execute `gen-synthetic`.

        Writes samples and ground-truth codes as activation containers and the
        ground-truth dictionary as an MP checkpoint with k = k_true.
        """
        out_dir = prepare_out_dir(config, "gen-synthetic")
        spec = config.spec()
        dataset, truth, codes = generate_synthetic(spec)

        metadata = {"generator": spec.model_dump(mode="json")}
        files = {
            "samples": out_dir / SAMPLES_FILE,
            "codes": out_dir / CODES_FILE,
            "truth": out_dir / TRUTH_FILE,
        }
        save_activation_matrix(files["samples"], dataset.samples, config.dtype, metadata)
        save_activation_matrix(files["codes"], codes, config.dtype, metadata)
        save_checkpoint(truth, EncoderConfig(variant=Variant.MP, k=spec.k_true), {"seed": spec.seed, **metadata}, files["truth"])
        logger.info(f"Wrote synthetic dataset to {out_dir}")
        return files

    def score(self, config: RecoveryRunConfig) -> RecoveryScore:
        """Execute `recovery-score`: writes recovery.csv and returns the score."""
        out_dir = prepare_out_dir(config, "recovery-score")
        learned, _, _ = load_checkpoint(config.checkpoint)
        truth, _, _ = load_checkpoint(config.truth)
        score = recovery_score(learned.d, truth.d, config.threshold)
        write_csv(
            out_dir / "recovery.csv",
            ("threshold", "matched_fraction", "mean_best_cosine"),
            [(config.threshold, score.matched_fraction, score.mean_best_cosine)],
        )
        return score


# Global synthetic service instance
_synthetic_service: Optional[SyntheticService] = None


def get_synthetic_service() -> SyntheticService:
    """
    Get the global synthetic service instance.

    Returns:
        SyntheticService instance
    """
    global _synthetic_service

    if _synthetic_service is None:
        _synthetic_service = SyntheticService()

    return _synthetic_service
