"""
Binary Container - Shared layout of checkpoints and activation matrices.

Layout (little-endian):
    8 bytes   magic
    4 bytes   header length N (uint32)
    N bytes   UTF-8 JSON header, including an "arrays" table of
              {name, rows, cols, offset, dtype}
    payload   raw row-major arrays; offsets are relative to the first payload byte
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from core.errors import FormatError

FORMAT_VERSION = 1
MAGIC_LENGTH = 8

_DTYPES = {"f64": np.dtype("<f8"), "f32": np.dtype("<f4")}


def encode_container(
    magic: bytes,
    header: Mapping[str, Any],
    arrays: Mapping[str, Tuple[np.ndarray, str]],
) -> bytes:
    """
    Serialize a header and named arrays into container bytes.

    Args:
        magic: 8-byte magic
        header: JSON-serializable header fields (the "arrays" table is added here)
        arrays: Mapping of name -> (array, dtype tag "f64" or "f32"); 1-D arrays are stored as len x 1

    Returns:
        Container bytes; identical inputs always give identical bytes
    """
    if len(magic) != MAGIC_LENGTH:
        raise ValueError(f"magic must be {MAGIC_LENGTH} bytes, got {len(magic)}")

    table = []
    payloads = []
    offset = 0
    for name, (array, dtype_tag) in arrays.items():
        dtype = _DTYPES[dtype_tag]
        matrix = np.asarray(array)
        if matrix.ndim == 1:
            matrix = matrix.reshape(-1, 1)
        rows, cols = matrix.shape
        raw = np.ascontiguousarray(matrix, dtype=dtype).tobytes(order="C")
        table.append({"name": name, "rows": int(rows), "cols": int(cols), "offset": offset, "dtype": dtype_tag})
        payloads.append(raw)
        offset += len(raw)

    full_header = dict(header)
    full_header["format_version"] = FORMAT_VERSION
    full_header["arrays"] = table
    header_bytes = json.dumps(full_header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    return magic + struct.pack("<I", len(header_bytes)) + header_bytes + b"".join(payloads)


def write_container(
    path: Union[str, Path],
    magic: bytes,
    header: Mapping[str, Any],
    arrays: Mapping[str, Tuple[np.ndarray, str]],
) -> None:
    """Write a container file (see encode_container)."""
    Path(path).write_bytes(encode_container(magic, header, arrays))


def decode_container(blob: bytes, magic: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Parse container bytes.

    Args:
        blob: Raw file contents
        magic: Expected 8-byte magic

    Returns:
        Tuple of (header dict, arrays by name as float64 matrices rows x cols)

    Raises:
        FormatError: truncated header, bad magic, corrupt header, version mismatch,
            truncated payload
    """
    if len(blob) < MAGIC_LENGTH + 4:
        raise FormatError("truncated header")
    if blob[:MAGIC_LENGTH] != magic:
        raise FormatError(f"bad magic: expected {magic!r}, found {blob[:MAGIC_LENGTH]!r}")

    (header_length,) = struct.unpack("<I", blob[MAGIC_LENGTH:MAGIC_LENGTH + 4])
    header_end = MAGIC_LENGTH + 4 + header_length
    if len(blob) < header_end:
        raise FormatError("truncated header")

    try:
        header = json.loads(blob[MAGIC_LENGTH + 4:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"corrupt header: {e}")
    if not isinstance(header, dict):
        raise FormatError("corrupt header: not a JSON object")

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version} (expected {FORMAT_VERSION})")

    payload = memoryview(blob)[header_end:]
    arrays: Dict[str, np.ndarray] = {}
    for entry in header.get("arrays", []):
        try:
            name = entry["name"]
            rows = int(entry["rows"])
            cols = int(entry["cols"])
            offset = int(entry["offset"])
            dtype = _DTYPES[entry["dtype"]]
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"corrupt array table entry {entry!r}: {e}")
        if rows < 0 or cols < 0 or offset < 0:
            raise FormatError(f"array {name}: negative shape or offset")

        size = rows * cols * dtype.itemsize
        if offset + size > len(payload):
            raise FormatError(f"truncated payload: array {name} needs {size} bytes at offset {offset}")
        if size == 0:
            arrays[name] = np.zeros((rows, cols))
            continue
        values = np.frombuffer(payload[offset:offset + size], dtype=dtype, count=rows * cols)
        arrays[name] = values.astype(np.float64).reshape(rows, cols)

    return header, arrays


def read_container(path: Union[str, Path], magic: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Read and parse a container file (see decode_container)."""
    return decode_container(Path(path).read_bytes(), magic)


def peek_magic(path: Union[str, Path]) -> bytes:
    """First 8 bytes of a file (shorter for tiny files)."""
    with open(path, "rb") as f:
        return f.read(MAGIC_LENGTH)
