"""
Datasets - MNIST IDX ingestion, synthetic ground-truth dictionaries,
activation-matrix files and dictionary recovery scoring.
"""

import gzip
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from core.container import decode_container, encode_container
from core.dictionary import Dictionary
from core.errors import ConfigError, DimensionError, FormatError
from core.numeric import DenseMatrix, DenseVector, column_norms, derive_seed, make_rng

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
ACTIVATIONS_MAGIC = b"SDLACTS1"


@dataclass
class Dataset:
    """
    Immutable N x m sample matrix with its cached column mean.

    `labels` is only carried for stratified subsetting; training ignores it.
    """

    samples: DenseMatrix
    source: str
    labels: Optional[np.ndarray] = None
    mean: DenseVector = field(init=False)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise DimensionError(f"dataset must be N x m, got shape {self.samples.shape}")
        if self.labels is not None and self.labels.shape[0] != self.samples.shape[0]:
            raise DimensionError(f"{self.labels.shape[0]} labels for {self.samples.shape[0]} samples")
        self.mean = self.samples.mean(axis=0) if self.n else np.zeros(self.m)

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])

    @property
    def m(self) -> int:
        return int(self.samples.shape[1])

    def subset(self, indices: np.ndarray) -> "Dataset":
        """Rows at the given indices, in the given order."""
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(samples=self.samples[indices], source=self.source, labels=labels)

    def limit(self, count: int, seed: int = 0) -> "Dataset":
        """
        At most `count` samples.

        With labels, draws an equal share per class (remainder to the lowest
        classes) with a seeded generator; without labels, keeps the first rows.
        """
        if count >= self.n:
            return self
        if self.labels is None:
            return self.subset(np.arange(count))
        return self.subset(stratified_indices(self.labels, count, seed))


def stratified_indices(labels: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Sorted indices of a class-balanced subset of size ≤ count."""
    rng = make_rng(derive_seed(seed, "stratified"))
    classes = np.unique(labels)
    base, extra = divmod(count, classes.size)
    chosen = []
    for position, label in enumerate(classes):
        members = np.flatnonzero(labels == label)
        quota = min(base + (1 if position < extra else 0), members.size)
        chosen.append(rng.choice(members, size=quota, replace=False))
    return np.sort(np.concatenate(chosen))


def _read_bytes(path: Union[str, Path]) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _parse_idx(blob: bytes, expected_magic: int, path: Union[str, Path]) -> Tuple[Tuple[int, ...], bytes]:
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic {magic} (expected {expected_magic})")
    ndim = magic & 0xFF
    header_size = 4 + 4 * ndim
    if len(blob) < header_size:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", blob[4:header_size])
    size = int(np.prod(dims))
    payload = blob[header_size:]
    if len(payload) < size:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {size} bytes)")
    return dims, payload[:size]


def load_mnist_idx(
    images_path: Union[str, Path],
    labels_path: Optional[Union[str, Path]] = None,
) -> Tuple[Dataset, Optional[np.ndarray]]:
    """
    Load MNIST images (and optionally labels) from IDX files.

    Files may be gzip-compressed (".gz"). Pixels are flattened row-wise and
    scaled by 1/255.

    Args:
        images_path: IDX image file (magic 2051)
        labels_path: Optional IDX label file (magic 2049)

    Returns:
        Tuple of (Dataset with values in [0, 1], labels or None)

    Raises:
        FormatError: Bad magic, truncated payload, or image/label count mismatch
    """
    dims, pixels = _parse_idx(_read_bytes(images_path), IMAGE_MAGIC, images_path)
    count = dims[0]
    images = np.frombuffer(pixels, dtype=np.uint8).reshape(count, -1).astype(np.float64) / 255.0

    labels = None
    if labels_path is not None:
        label_dims, raw = _parse_idx(_read_bytes(labels_path), LABEL_MAGIC, labels_path)
        if label_dims[0] != count:
            raise FormatError(f"N mismatch: {count} images but {label_dims[0]} labels")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    logger.info(f"Loaded {count} MNIST images of {images.shape[1]} pixels from {images_path}")
    return Dataset(samples=images, source=f"mnist:{images_path}", labels=labels), labels


def save_activation_matrix(
    path: Union[str, Path],
    samples: DenseMatrix,
    dtype: Literal["f64", "f32"] = "f64",
    metadata: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write an N x m matrix as an activation container (single array "X")."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise DimensionError(f"activation matrix must be N x m, got shape {samples.shape}")
    header = {"n": int(samples.shape[0]), "m": int(samples.shape[1]), "metadata": dict(metadata or {})}
    Path(path).write_bytes(encode_container(ACTIVATIONS_MAGIC, header, {"X": (samples, dtype)}))


def load_activation_matrix(path: Union[str, Path]) -> Dataset:
    """
    Read an activation container written by save_activation_matrix.

    Raises:
        FormatError: Bad magic, truncation, missing "X", or N = 0 ("empty dataset")
    """
    header, arrays = decode_container(Path(path).read_bytes(), ACTIVATIONS_MAGIC)
    if "X" not in arrays:
        raise FormatError(f"{path}: activation container has no array X")
    samples = arrays["X"]
    if samples.shape[0] == 0 or header.get("n") == 0:
        raise FormatError(f"{path}: empty dataset")
    logger.info(f"Loaded activation matrix {samples.shape[0]} x {samples.shape[1]} from {path}")
    return Dataset(samples=samples, source=f"activations:{path}")


def activation_metadata(path: Union[str, Path]) -> Dict[str, Any]:
    header, _ = decode_container(Path(path).read_bytes(), ACTIVATIONS_MAGIC)
    return dict(header.get("metadata") or {})


class SyntheticSpec(BaseModel):
    """Ground-truth generator parameters."""

    m: int = Field(ge=1)
    p_true: int = Field(ge=1)
    k_true: int = Field(ge=1)
    n: int = Field(ge=1)
    coherence_mode: Literal["orthogonal", "random", "block"] = "random"
    block_size: Optional[int] = Field(default=None, ge=1)
    within_block_coherence: Optional[float] = None
    noise_sigma: float = Field(default=0.0, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "SyntheticSpec":
        if self.k_true > self.p_true:
            raise ValueError(f"k_true ≤ p_true required (k_true={self.k_true}, p_true={self.p_true})")
        if self.coherence_mode == "block":
            if self.block_size is None or self.within_block_coherence is None:
                raise ValueError("block mode needs block_size and within_block_coherence")
            if self.p_true % self.block_size:
                raise ValueError(f"block_size {self.block_size} must divide p_true {self.p_true}")
        return self


def _orthonormal_frame(rng, m: int, count: int) -> DenseMatrix:
    q, r = np.linalg.qr(rng.standard_normal((m, count)))
    # sign fix makes the frame a deterministic function of the draw
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def _ground_truth_atoms(spec: SyntheticSpec, rng) -> DenseMatrix:
    if spec.coherence_mode == "orthogonal":
        if spec.p_true > spec.m:
            raise ConfigError(f"orthogonal mode needs p_true ≤ m (p_true={spec.p_true}, m={spec.m})")
        return _orthonormal_frame(rng, spec.m, spec.p_true)

    if spec.coherence_mode == "random":
        atoms = rng.standard_normal((spec.m, spec.p_true))
        return atoms / column_norms(atoms)

    c = spec.within_block_coherence
    if not 0.0 <= c <= 1.0:
        raise ConfigError(f"within_block_coherence must lie in [0, 1], got {c}")
    if spec.block_size + 1 > spec.m:
        raise ConfigError(f"block mode needs block_size + 1 ≤ m (block_size={spec.block_size}, m={spec.m})")
    blocks = []
    for _ in range(spec.p_true // spec.block_size):
        frame = _orthonormal_frame(rng, spec.m, spec.block_size + 1)
        shared, own = frame[:, :1], frame[:, 1:]
        blocks.append(np.sqrt(c) * shared + np.sqrt(1.0 - c) * own)
    return np.hstack(blocks)


def generate_synthetic(spec: SyntheticSpec) -> Tuple[Dataset, Dictionary, DenseMatrix]:
    """
    Sample a ground-truth dictionary, sparse codes and noisy observations.

    Codes have k_true distinct atoms drawn uniformly with coefficients
    |N(0,1)| + 0.1; x = D* z + noise_sigma * N(0, I).

    Returns:
        Tuple of (Dataset, ground-truth Dictionary with b_pre = 0, dense codes n x p_true)

    Raises:
        ConfigError: Infeasible coherence target for the dimensions
    """
    rng = make_rng(spec.seed)
    atoms = _ground_truth_atoms(spec, rng)

    codes = np.zeros((spec.n, spec.p_true))
    for i in range(spec.n):
        support = rng.choice(spec.p_true, size=spec.k_true, replace=False)
        codes[i, support] = np.abs(rng.standard_normal(spec.k_true)) + 0.1
    samples = codes @ atoms.T
    if spec.noise_sigma > 0:
        samples = samples + spec.noise_sigma * rng.standard_normal(samples.shape)

    truth = Dictionary(d=atoms, b_pre=np.zeros(spec.m))
    logger.info(f"Generated {spec.n} synthetic samples ({spec.coherence_mode}, m={spec.m}, p_true={spec.p_true})")
    return Dataset(samples=samples, source=f"synthetic:{spec.coherence_mode}"), truth, codes


class RecoveryScore(BaseModel):
    matched_fraction: float
    mean_best_cosine: float


def recovery_score(D_learned: DenseMatrix, D_true: DenseMatrix, threshold: float = 0.9) -> RecoveryScore:
    """
    How well learned atoms recover the ground truth.

    Pairs atoms greedily one-to-one by |cosine|, highest first; the matched
    fraction is the share of true atoms whose partner reaches the threshold.
    mean_best_cosine averages each true atom's best |cosine| over all learned atoms.

    Raises:
        DimensionError: Different input dimensions
    """
    D_learned = np.asarray(D_learned, dtype=np.float64)
    D_true = np.asarray(D_true, dtype=np.float64)
    if D_learned.shape[0] != D_true.shape[0]:
        raise DimensionError(f"dictionaries differ in m: {D_learned.shape[0]} vs {D_true.shape[0]}")

    cosines = np.abs((D_true / column_norms(D_true)).T @ (D_learned / column_norms(D_learned)))
    best = cosines.max(axis=1)

    order = np.argsort(-cosines, axis=None, kind="stable")
    true_used = np.zeros(cosines.shape[0], dtype=bool)
    learned_used = np.zeros(cosines.shape[1], dtype=bool)
    matched = 0
    for flat in order:
        i, j = divmod(int(flat), cosines.shape[1])
        if true_used[i] or learned_used[j]:
            continue
        if cosines[i, j] < threshold:
            break
        true_used[i] = learned_used[j] = True
        matched += 1

    return RecoveryScore(matched_fraction=matched / cosines.shape[0], mean_best_cosine=float(best.mean()))
