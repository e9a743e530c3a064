"""
Inspect Service - Step-by-step reconstruction traces of individual samples.

MP traces follow the real iterations. Shallow codes have no iterations, so
their active atoms are replayed in order of descending coefficient.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from core.checkpoint import load_checkpoint
from core.dictionary import Dictionary, EncoderConfig, Variant
from core.encoders import encode_batch, mp_batch
from core.images import image_side, tile_grid, write_pgm
from workbench.models.run_config import InspectRunConfig
from workbench.services.dataset_service import check_width, load_dataset
from workbench.services.outputs import prepare_out_dir, write_csv

logger = logging.getLogger(__name__)


class SampleTrace(BaseModel):
    """Reconstruction sequence of one sample (step 0 is b_pre)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    atoms: List[int]
    coefficients: List[float]
    residual_norms: List[float]
    partials: np.ndarray


def trace_sample(dictionary: Dictionary, cfg: EncoderConfig, x: np.ndarray, k: Optional[int] = None) -> SampleTrace:
    """
    Build the reconstruction trace of one sample.

    Args:
        dictionary: Model
        cfg: Encoder config
        x: Sample of length m
        k: Inference sparsity override

    Returns:
        SampleTrace with len(partials) == len(atoms) + 1
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    steps = cfg.k if k is None else k

    if cfg.variant is Variant.MP:
        batch = mp_batch(dictionary, x, steps, cfg.absolute_argmax, keep_partials=True)
        code = batch.code(0)
        norms = batch.trace(0).residual_norms
        partials = batch.partials[: len(code) + 1, 0, :]
        return SampleTrace(
            atoms=code.indices.tolist(),
            coefficients=code.values.tolist(),
            residual_norms=norms.tolist(),
            partials=partials,
        )

    code = encode_batch(dictionary, cfg, x, k=k).code(0)
    order = np.lexsort((code.indices, -code.values))
    atoms = code.indices[order]
    coefficients = code.values[order]
    contributions = coefficients[:, None] * dictionary.d[:, atoms].T
    partials = dictionary.b_pre + np.vstack([np.zeros((1, dictionary.m)), np.cumsum(contributions, axis=0)])
    norms = np.linalg.norm(x - partials, axis=1)
    return SampleTrace(
        atoms=atoms.tolist(),
        coefficients=coefficients.tolist(),
        residual_norms=norms.tolist(),
        partials=partials,
    )


class InspectService:
    """Writes per-sample trace artifacts."""

    def run(self, config: InspectRunConfig) -> Dict[int, List[Path]]:
        """
        Execute `inspect`.

        Per sample i: sample_{i}_trace.csv, sample_{i}_partials.csv and, for
        square inputs, sample_{i}_strip.pgm (partials x_hat^(0..T) then the input,
        sharing one gray scale).

        Raises:
            IndexError: If a sample index is outside the dataset
        """
        out_dir = prepare_out_dir(config, "inspect")
        dictionary, cfg, _ = load_checkpoint(config.checkpoint)
        dataset = load_dataset(config.data, config.labels, config.limit, config.seed)
        check_width(dataset, dictionary.m)

        for index in config.samples:
            if index >= dataset.n:
                raise IndexError(f"sample index {index} out of range for {dataset.n} samples")

        written: Dict[int, List[Path]] = {}
        for index in config.samples:
            x = dataset.samples[index]
            trace = trace_sample(dictionary, cfg, x, config.k)
            written[index] = self._write_sample(out_dir, index, x, trace)
        return written

    def _write_sample(self, out_dir: Path, index: int, x: np.ndarray, trace: SampleTrace) -> List[Path]:
        rows = [(0, "", "", trace.residual_norms[0])]
        rows += [
            (t, atom, coefficient, trace.residual_norms[t])
            for t, (atom, coefficient) in enumerate(zip(trace.atoms, trace.coefficients), start=1)
        ]
        paths = [write_csv(out_dir / f"sample_{index}_trace.csv", ("step", "atom", "coefficient", "residual_norm"), rows)]

        m = trace.partials.shape[1]
        paths.append(
            write_csv(
                out_dir / f"sample_{index}_partials.csv",
                ("step",) + tuple(f"x{j}" for j in range(m)),
                [(t, *row.tolist()) for t, row in enumerate(trace.partials)],
            )
        )

        if image_side(m) is not None:
            strip = tile_grid(list(trace.partials) + [x], columns=len(trace.partials) + 1, shared_range=True)
            strip_path = out_dir / f"sample_{index}_strip.pgm"
            write_pgm(strip_path, strip)
            paths.append(strip_path)
        else:
            logger.info(f"m={m} is not a square image size; skipping the PGM strip")
        return paths


# Global inspect service instance
_inspect_service: Optional[InspectService] = None


def get_inspect_service() -> InspectService:
    """
    Get the global inspect service instance.

    Returns:
        InspectService instance
    """
    global _inspect_service

    if _inspect_service is None:
        _inspect_service = InspectService()

    return _inspect_service
