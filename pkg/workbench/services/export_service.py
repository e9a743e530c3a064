"""
Export Service - Renders the top atoms of a dictionary as image grids or CSVs.

Atoms are ranked by activation frequency and by mean activation value over an
evaluation dataset; without data, the first atoms by index are exported.
"""

import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from core.checkpoint import load_checkpoint
from core.dictionary import Dictionary
from core.errors import ConfigError
from core.images import image_side, tile_grid, write_pgm
from core.metrics import activation_stats
from workbench.models.run_config import ExportAtomsRunConfig
from workbench.services.dataset_service import check_width, load_dataset
from workbench.services.evaluation_service import encode_dataset
from workbench.services.outputs import prepare_out_dir, write_csv

logger = logging.getLogger(__name__)


def write_atoms(dictionary: Dictionary, atoms: np.ndarray, path_stem: Path) -> Path:
    """
    Write the given atoms as a PGM grid (square m) or a CSV of raw values.

    Returns:
        Path of the written file
    """
    if image_side(dictionary.m) is not None:
        path = path_stem.with_suffix(".pgm")
        write_pgm(path, tile_grid([dictionary.d[:, j] for j in atoms]))
        logger.info(f"Wrote {path}")
        return path
    return write_csv(
        path_stem.with_suffix(".csv"),
        ("atom",) + tuple(f"x{i}" for i in range(dictionary.m)),
        [(int(j), *dictionary.d[:, j].tolist()) for j in atoms],
    )


class ExportService:
    """Exports atom grids and rankings."""

    def run(self, config: ExportAtomsRunConfig) -> Dict[str, Path]:
        """
        Execute `export-atoms`.

        Raises:
            ConfigError: If top_n exceeds p
        """
        out_dir = prepare_out_dir(config, "export-atoms")
        dictionary, cfg, _ = load_checkpoint(config.checkpoint)
        if config.top_n > dictionary.p:
            raise ConfigError(f"--top-n {config.top_n} exceeds the dictionary size p={dictionary.p}")

        if config.data is None:
            atoms = np.arange(config.top_n)
            return {"atoms_by_index": write_atoms(dictionary, atoms, out_dir / "atoms_by_index")}

        dataset = load_dataset(config.data, config.labels, config.limit, config.seed)
        check_width(dataset, dictionary.m)
        _, codes = encode_dataset(dictionary, cfg, dataset.samples, k=config.k)
        stats = activation_stats(codes, dictionary.p)
        by_frequency = stats.rank_by_frequency()[: config.top_n]
        by_value = stats.rank_by_value()[: config.top_n]

        files = {
            "atoms_by_frequency": write_atoms(dictionary, by_frequency, out_dir / "atoms_by_frequency"),
            "atoms_by_value": write_atoms(dictionary, by_value, out_dir / "atoms_by_value"),
        }
        files["atom_ranking"] = write_csv(
            out_dir / "atom_ranking.csv",
            ("rank", "by_frequency", "freq", "by_value", "mean_value"),
            [
                (rank, int(f), float(stats.freq[f]), int(v), float(stats.mean_value[v]))
                for rank, (f, v) in enumerate(zip(by_frequency, by_value), start=1)
            ],
        )
        return files


# Global export service instance
_export_service: Optional[ExportService] = None


def get_export_service() -> ExportService:
    """
    Get the global export service instance.

    Returns:
        ExportService instance
    """
    global _export_service

    if _export_service is None:
        _export_service = ExportService()

    return _export_service
