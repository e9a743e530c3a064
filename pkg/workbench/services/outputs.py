"""
Output Helpers - Run directories, run_config.json and deterministic CSV files.
"""

import csv
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

from workbench.models.run_config import RunParams

logger = logging.getLogger(__name__)

RUN_CONFIG_FILE = "run_config.json"


def prepare_out_dir(config: RunParams, command: str) -> Path:
    """Create the output directory and echo the effective config into it."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RUN_CONFIG_FILE).write_text(config.to_json(command))
    return out_dir


def format_cell(value: Any) -> str:
    """repr for floats (round-trips exactly), str otherwise."""
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):
        return format_cell(value.item())
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a CSV with a header row and "\\n" line endings."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(value) for value in row])
    logger.info(f"Wrote {path}")
    return path
