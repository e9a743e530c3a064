"""
Checkpoint persistence for dictionaries and their encoder configs.

Files use the shared binary container with magic "SDLCKPT1" and arrays
"D", "b_pre" and, when present, "W", "b", "theta".
"""

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from core.container import decode_container, encode_container
from core.dictionary import Dictionary, EncoderConfig, Variant
from core.errors import FormatError, InvariantError
from core.numeric import column_norms

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SDLCKPT1"

_OPTION_FIELDS = ("dead_steps_threshold", "tied", "absolute_argmax", "detach_residual", "freeze_b_pre")


def encode_checkpoint(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    metadata: Optional[Mapping[str, Any]] = None,
) -> bytes:
    """
    Serialize a normalized dictionary and its config.

    Raises:
        InvariantError: If the dictionary is not normalized (message carries the norm report)
            or its parameters do not match the config
    """
    if not dictionary.is_normalized():
        norms = column_norms(dictionary.d)
        worst = int(np.argmax(np.abs(norms - 1.0)))
        raise InvariantError(
            f"refusing to save unnormalized dictionary: max | ||D_j|| - 1 | = "
            f"{abs(norms[worst] - 1.0):.3e} at column {worst} (norm {norms[worst]:.12g})"
        )
    dictionary.check_config(cfg)

    meta = dict(metadata or {})
    header = {
        "m": dictionary.m,
        "p": dictionary.p,
        "variant": cfg.variant.value,
        "k": cfg.k,
        "lambda": cfg.lambda_,
        "target_l0": cfg.target_l0,
        "aux_alpha": cfg.aux_alpha,
        "aux_k": cfg.aux_k,
        "ste_bandwidth": cfg.ste_bandwidth,
        "seed": meta.get("seed"),
        "options": {name: getattr(cfg, name) for name in _OPTION_FIELDS},
        "metadata": meta,
    }
    arrays = {name: (array, "f64") for name, array in dictionary.arrays().items()}
    return encode_container(CHECKPOINT_MAGIC, header, arrays)


def save_checkpoint(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    metadata: Optional[Mapping[str, Any]],
    path: Union[str, Path],
) -> None:
    """
    Write a checkpoint file.

    Args:
        dictionary: Normalized model
        cfg: Encoder config stored alongside
        metadata: JSON-serializable training digest (seed, steps, epochs, ...)
        path: Destination file
    """
    blob = encode_checkpoint(dictionary, cfg, metadata)
    Path(path).write_bytes(blob)
    logger.info(f"Saved {cfg.variant.value} checkpoint (m={dictionary.m}, p={dictionary.p}) to {path}")


def decode_checkpoint(blob: bytes) -> Tuple[Dictionary, EncoderConfig, Dict[str, Any]]:
    """
    Parse checkpoint bytes.

    Returns:
        Tuple of (dictionary, encoder config, metadata)

    Raises:
        FormatError: container-level problems (bad magic, truncation, version)
        InvariantError: every violated model invariant, reported together
    """
    header, arrays = decode_container(blob, CHECKPOINT_MAGIC)

    violations = []
    m = header.get("m")
    p = header.get("p")
    if not isinstance(m, int) or m < 1:
        violations.append(f"m must be ≥ 1 (header m={m})")
    if not isinstance(p, int) or p < 1:
        violations.append(f"p must be ≥ 1 (header p={p})")
    if violations:
        raise InvariantError("; ".join(violations))

    try:
        cfg = EncoderConfig(
            variant=Variant(header.get("variant")),
            k=header.get("k"),
            lambda_=header.get("lambda"),
            target_l0=header.get("target_l0"),
            aux_alpha=header.get("aux_alpha"),
            aux_k=header.get("aux_k"),
            ste_bandwidth=header.get("ste_bandwidth"),
            **header.get("options", {}),
        )
    except (ValueError, ValidationError) as e:
        raise FormatError(f"corrupt encoder config in header: {e}")

    expected_shapes = {"D": (m, p), "b_pre": (m, 1), "W": (m, p), "b": (p, 1), "theta": (p, 1)}
    for name, array in arrays.items():
        if name not in expected_shapes:
            violations.append(f"unknown array {name!r}")
        elif array.shape != expected_shapes[name]:
            violations.append(f"array {name} has shape {array.shape}, expected {expected_shapes[name]}")
    for required in ("D", "b_pre"):
        if required not in arrays:
            violations.append(f"missing array {required}")
    if cfg.variant is Variant.MP and "W" in arrays:
        violations.append("variant mp must not carry encoder weights W")
    if cfg.has_encoder_weights and "W" not in arrays:
        violations.append(f"variant {cfg.variant.value} requires encoder weights W")
    if cfg.variant is Variant.JUMPRELU and "theta" not in arrays:
        violations.append("variant jumprelu requires thresholds theta")
    if "theta" in arrays and (arrays["theta"] < 0).any():
        violations.append("thresholds must be ≥ 0")
    if "D" in arrays and arrays["D"].shape == (m, p):
        deviation = float(np.max(np.abs(column_norms(arrays["D"]) - 1.0)))
        if deviation >= 1e-8:
            violations.append(f"dictionary not normalized (max | ||D_j|| - 1 | = {deviation:.3e})")
    if violations:
        raise InvariantError("; ".join(violations))

    def vector(name: str) -> Optional[np.ndarray]:
        return arrays[name].reshape(-1).copy() if name in arrays else None

    dictionary = Dictionary(
        d=arrays["D"].copy(),
        b_pre=vector("b_pre"),
        encoder_weights=arrays["W"].copy() if "W" in arrays else None,
        encoder_bias=vector("b"),
        thresholds=vector("theta"),
    )
    dictionary.check_config(cfg)

    return dictionary, cfg, dict(header.get("metadata") or {})


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dictionary, EncoderConfig, Dict[str, Any]]:
    """
    Load a checkpoint written by save_checkpoint.

    Returns:
        Tuple of (dictionary, encoder config, metadata)
    """
    dictionary, cfg, metadata = decode_checkpoint(Path(path).read_bytes())
    logger.info(f"Loaded {cfg.variant.value} checkpoint (m={dictionary.m}, p={dictionary.p}) from {path}")
    return dictionary, cfg, metadata
