"""
Image Export - 8-bit binary PGM (P5) rendering of atoms and reconstructions.

Vectors of length side^2 are shown as side x side tiles. Tiles are min-max
normalized; a constant tile renders mid-gray.
"""

import math
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from core.errors import DimensionError

MID_GRAY = 128
TILE_GAP = 1


def image_side(m: int) -> Optional[int]:
    """Side length when m is a perfect square, else None."""
    side = math.isqrt(m)
    return side if side * side == m else None


def to_gray(values: np.ndarray, low: Optional[float] = None, high: Optional[float] = None) -> np.ndarray:
    """
    Min-max map values to 0..255 (uint8).

    low/high default to the values' own range; an empty range maps to mid-gray.
    """
    values = np.asarray(values, dtype=np.float64)
    low = float(values.min()) if low is None else low
    high = float(values.max()) if high is None else high
    if not high > low:
        return np.full(values.shape, MID_GRAY, dtype=np.uint8)
    scaled = np.clip((values - low) / (high - low), 0.0, 1.0)
    return np.rint(scaled * 255.0).astype(np.uint8)


def encode_pgm(pixels: np.ndarray) -> bytes:
    """P5 bytes of a 2-D uint8 image."""
    if pixels.ndim != 2:
        raise DimensionError(f"PGM image must be 2-D, got shape {pixels.shape}")
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def write_pgm(path: Union[str, Path], pixels: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(pixels))


def tile_grid(vectors: Sequence[np.ndarray], columns: Optional[int] = None, shared_range: bool = False) -> np.ndarray:
    """
    Arrange square-image vectors into one grid image.

    Args:
        vectors: Equal-length vectors of perfect-square length
        columns: Tiles per row; ceil(sqrt(N)) when None (25 tiles -> 5 x 5)
        shared_range: Normalize with the min/max of all vectors instead of per tile

    Returns:
        uint8 image with a 1-pixel black gap between tiles

    Raises:
        DimensionError: Empty input or non-square vector length
    """
    if len(vectors) == 0:
        raise DimensionError("tile_grid needs at least one vector")
    stacked = np.asarray(vectors, dtype=np.float64)
    side = image_side(stacked.shape[1])
    if side is None:
        raise DimensionError(f"vector length {stacked.shape[1]} is not a perfect square")

    count = stacked.shape[0]
    columns = columns or math.ceil(math.sqrt(count))
    rows = math.ceil(count / columns)
    step = side + TILE_GAP
    grid = np.zeros((rows * step - TILE_GAP, columns * step - TILE_GAP), dtype=np.uint8)

    low = float(stacked.min()) if shared_range else None
    high = float(stacked.max()) if shared_range else None
    for index, vector in enumerate(stacked):
        r, c = divmod(index, columns)
        grid[r * step:r * step + side, c * step:c * step + side] = to_gray(vector, low, high).reshape(side, side)
    return grid
