"""
Tests for PGM rendering and tile grids.
"""

import numpy as np
import pytest

from core.errors import DimensionError
from core.images import MID_GRAY, encode_pgm, image_side, tile_grid, to_gray, write_pgm


class TestGray:
    """Test cases for image_side and to_gray."""

    def test_image_side(self):
        """Test perfect squares and non-squares."""
        assert image_side(784) == 28
        assert image_side(10) is None

    def test_min_max_mapping(self):
        """Test that the range maps onto 0..255."""
        assert to_gray(np.array([-1.0, 0.0, 1.0])).tolist() == [0, 128, 255]

    def test_constant_is_mid_gray(self):
        """Test that a flat tile renders mid-gray."""
        assert np.all(to_gray(np.full(4, 3.0)) == MID_GRAY)

    def test_explicit_range_clips(self):
        """Test that values outside low/high are clipped."""
        assert to_gray(np.array([-5.0, 5.0]), low=0.0, high=1.0).tolist() == [0, 255]


class TestPgm:
    """Test cases for the P5 encoder."""

    def test_header_and_payload(self, tmp_path):
        """Test the binary layout of a 2 x 3 image."""
        pixels = np.arange(6, dtype=np.uint8).reshape(2, 3)
        assert encode_pgm(pixels) == b"P5\n3 2\n255\n" + bytes(range(6))
        path = tmp_path / "image.pgm"
        write_pgm(path, pixels)
        assert path.read_bytes().startswith(b"P5\n3 2\n")

    def test_rejects_vectors(self):
        """Test that 1-D input fails."""
        with pytest.raises(DimensionError):
            encode_pgm(np.zeros(4, dtype=np.uint8))


class TestTileGrid:
    """Test cases for tile_grid."""

    def test_default_layout(self):
        """Test 25 tiles of 2 x 2 in a 5 x 5 grid with 1-pixel gaps."""
        grid = tile_grid([np.arange(4.0)] * 25)
        assert grid.shape == (5 * 3 - 1, 5 * 3 - 1)
        assert grid[2, :].max() == 0
        assert grid[0, 0] == 0 and grid[1, 1] == 255

    def test_explicit_columns(self):
        """Test a single-row strip."""
        grid = tile_grid([np.zeros(9), np.ones(9)], columns=2)
        assert grid.shape == (3, 7)

    def test_shared_range(self):
        """Test that a shared scale keeps relative brightness across tiles."""
        grid = tile_grid([np.zeros(4), np.ones(4)], columns=2, shared_range=True)
        assert grid[0, 0] == 0
        assert grid[0, 3] == 255

    def test_non_square(self):
        """Test that non-square vectors are rejected."""
        with pytest.raises(DimensionError):
            tile_grid([np.zeros(5)])

    def test_empty(self):
        """Test that no vectors are rejected."""
        with pytest.raises(DimensionError):
            tile_grid([])
