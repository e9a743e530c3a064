"""
Dictionary Model - Learned parameters of a sparse autoencoder and their invariants.

A Dictionary owns the decoder D (m x p, unit-norm columns), the pre-bias b_pre,
the optional untied encoder (W, b) of the shallow variants and the JumpReLU
thresholds. EncoderConfig is the tagged variant description paired with it.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.errors import ConfigError, InvariantError, shape_mismatch
from core.numeric import DenseMatrix, DenseVector, Rng, as_vector, column_norms

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-8
DEGENERATE_NORM = 1e-12
INITIAL_THRESHOLD = 0.001
DEFAULT_AUX_ALPHA = 1.0 / 32.0


class Variant(str, Enum):
    """Encoder family."""

    RELU = "relu"
    JUMPRELU = "jumprelu"
    TOPK = "topk"
    BATCHTOPK = "batchtopk"
    MP = "mp"

    @property
    def is_shallow(self) -> bool:
        return self is not Variant.MP

    @property
    def uses_k(self) -> bool:
        return self in (Variant.TOPK, Variant.BATCHTOPK, Variant.MP)


class EncoderConfig(BaseModel):
    """
    Variant tag plus per-variant hyperparameters.

    Field `lambda_` is exposed as "lambda" when serialized.
    """

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    variant: Variant
    k: int = Field(default=10, description="Target sparsity (TopK, BatchTopK, MP steps)")
    lambda_: float = Field(default=1e-3, alias="lambda", description="l1 weight (ReLU)")
    target_l0: float = Field(default=1e-3, description="l0 penalty weight (JumpReLU)")
    aux_alpha: Optional[float] = Field(default=None, description="Auxiliary loss weight; None picks the variant default")
    aux_k: Optional[int] = Field(default=None, description="Dead atoms used by the auxiliary loss; None picks min(2k, p/2)")
    dead_steps_threshold: int = Field(default=256, description="Steps without activation before an atom counts as dead")
    ste_bandwidth: float = Field(default=0.001, description="JumpReLU straight-through kernel width")
    tied: bool = Field(default=False, description="Shallow variants reuse D as encoder weights")
    absolute_argmax: bool = Field(default=False, description="MP selects by |D^T r| instead of the signed correlation")
    detach_residual: bool = Field(default=False, description="MP backprop treats coefficients as constants")
    freeze_b_pre: bool = Field(default=False, description="Keep b_pre at its initial value")

    @field_validator("k")
    @classmethod
    def _k_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("k ≥ 1")
        return value

    @field_validator("lambda_", "target_l0", "ste_bandwidth")
    @classmethod
    def _non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("must be ≥ 0")
        return value

    @field_validator("aux_alpha")
    @classmethod
    def _aux_alpha_non_negative(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value < 0:
            raise ValueError("aux_alpha ≥ 0")
        return value

    @field_validator("aux_k")
    @classmethod
    def _aux_k_positive(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError("aux_k ≥ 1")
        return value

    @field_validator("dead_steps_threshold")
    @classmethod
    def _dead_steps_non_negative(cls, value: int) -> int:
        if value < 0:
            raise ValueError("dead_steps_threshold ≥ 0")
        return value

    @property
    def has_encoder_weights(self) -> bool:
        """Untied shallow variants carry their own W and b."""
        return self.variant.is_shallow and not self.tied

    @property
    def has_encoder_bias(self) -> bool:
        return self.variant.is_shallow

    def resolved_aux_alpha(self) -> float:
        """Aux weight: 1/32 for TopK, BatchTopK and JumpReLU, off for ReLU and MP unless set."""
        if self.aux_alpha is not None:
            return self.aux_alpha
        if self.variant in (Variant.TOPK, Variant.BATCHTOPK, Variant.JUMPRELU):
            return DEFAULT_AUX_ALPHA
        return 0.0

    def resolved_aux_k(self, p: int) -> int:
        if self.aux_k is not None:
            return min(self.aux_k, p)
        return max(1, min(2 * self.k, p // 2))

    def check_against(self, p: int) -> None:
        """
        Validate the config against a dictionary size.

        Raises:
            ConfigError: If k > p for TopK/BatchTopK/MP or aux_k > p
        """
        if self.variant.uses_k and self.k > p:
            raise ConfigError(f"k ≤ p required for {self.variant.value}: k={self.k}, p={p}")
        if self.aux_k is not None and self.aux_k > p:
            raise ConfigError(f"aux_k ≤ p required: aux_k={self.aux_k}, p={p}")


@dataclass
class Dictionary:
    """
    Learned SAE parameters.

    Arrays are float64 numpy arrays; the model is mutated only by the trainer
    between batches and is otherwise treated as immutable.
    """

    d: DenseMatrix
    b_pre: DenseVector
    encoder_weights: Optional[DenseMatrix] = None
    encoder_bias: Optional[DenseVector] = None
    thresholds: Optional[DenseVector] = None

    def __post_init__(self) -> None:
        if self.d.ndim != 2 or self.d.shape[0] < 1 or self.d.shape[1] < 1:
            raise InvariantError(f"dictionary must be m x p with m, p ≥ 1, got shape {self.d.shape}")
        m, p = self.d.shape
        if self.b_pre.shape != (m,):
            raise shape_mismatch("b_pre", self.b_pre.shape, (m,))
        if self.encoder_weights is not None and self.encoder_weights.shape != (m, p):
            raise shape_mismatch("encoder weights", self.encoder_weights.shape, (m, p))
        if self.encoder_bias is not None and self.encoder_bias.shape != (p,):
            raise shape_mismatch("encoder bias", self.encoder_bias.shape, (p,))
        if self.thresholds is not None:
            if self.thresholds.shape != (p,):
                raise shape_mismatch("thresholds", self.thresholds.shape, (p,))
            if (self.thresholds < 0).any():
                raise InvariantError("thresholds must be ≥ 0")

    @property
    def m(self) -> int:
        return int(self.d.shape[0])

    @property
    def p(self) -> int:
        return int(self.d.shape[1])

    @property
    def encoder_matrix(self) -> DenseMatrix:
        """W for untied variants, D itself when tied."""
        return self.encoder_weights if self.encoder_weights is not None else self.d

    def copy(self) -> "Dictionary":
        """Deep copy of all arrays."""
        return Dictionary(
            d=self.d.copy(),
            b_pre=self.b_pre.copy(),
            encoder_weights=None if self.encoder_weights is None else self.encoder_weights.copy(),
            encoder_bias=None if self.encoder_bias is None else self.encoder_bias.copy(),
            thresholds=None if self.thresholds is None else self.thresholds.copy(),
        )

    def max_norm_deviation(self) -> float:
        """max_j | ||D_j|| - 1 |."""
        return float(np.max(np.abs(column_norms(self.d) - 1.0)))

    def is_normalized(self, tolerance: float = NORM_TOLERANCE) -> bool:
        return self.max_norm_deviation() < tolerance

    def arrays(self) -> dict:
        """Named parameter arrays present in this model (checkpoint names)."""
        named = {"D": self.d, "b_pre": self.b_pre}
        if self.encoder_weights is not None:
            named["W"] = self.encoder_weights
        if self.encoder_bias is not None:
            named["b"] = self.encoder_bias
        if self.thresholds is not None:
            named["theta"] = self.thresholds
        return named

    def check_config(self, cfg: EncoderConfig) -> None:
        """
        Check parameter presence against the paired config.

        Raises:
            InvariantError: If W is present for MP/tied configs or missing for untied ones,
                or JumpReLU thresholds are missing
        """
        if cfg.has_encoder_weights and self.encoder_weights is None:
            raise InvariantError(f"variant {cfg.variant.value} requires encoder weights W")
        if not cfg.has_encoder_weights and self.encoder_weights is not None:
            raise InvariantError(f"variant {cfg.variant.value} (tied={cfg.tied}) must not carry encoder weights W")
        if cfg.has_encoder_bias and self.encoder_bias is None:
            raise InvariantError(f"variant {cfg.variant.value} requires encoder bias b")
        if cfg.variant is Variant.JUMPRELU and self.thresholds is None:
            raise InvariantError("jumprelu requires thresholds")
        if cfg.variant is Variant.MP and (self.encoder_bias is not None or self.thresholds is not None):
            raise InvariantError("mp must not carry encoder bias or thresholds")


@dataclass
class RenormReport:
    """Outcome of a renormalization pass: old column norms and columns replaced by basis vectors."""

    old_norms: DenseVector
    replaced: list[int] = field(default_factory=list)


def init_dictionary(
    m: int,
    p: int,
    rng: Rng,
    data_mean: DenseVector,
    cfg: Optional[EncoderConfig] = None,
) -> Dictionary:
    """
    Initialize a dictionary.

    Columns are i.i.d. standard normal and then normalized; b_pre is the data
    mean. When a shallow config is supplied, untied encoders start at W = D with
    b = 0, and JumpReLU thresholds start at 0.001.

    Args:
        m: Input dimension
        p: Atom count
        rng: Seeded generator
        data_mean: Training-set mean, length m
        cfg: Optional encoder config deciding which encoder parameters exist

    Returns:
        Normalized Dictionary

    Raises:
        InvariantError: If m or p is zero
        DimensionError: If data_mean has the wrong length
    """
    if m < 1 or p < 1:
        raise InvariantError(f"dictionary needs m ≥ 1 and p ≥ 1, got m={m}, p={p}")
    mean = as_vector(data_mean)
    if mean.shape != (m,):
        raise shape_mismatch("data_mean", mean.shape, (m,))

    d = rng.standard_normal((m, p))
    d /= column_norms(d)

    encoder_weights = None
    encoder_bias = None
    thresholds = None
    if cfg is not None:
        if cfg.has_encoder_weights:
            encoder_weights = d.copy()
        if cfg.has_encoder_bias:
            encoder_bias = np.zeros(p)
        if cfg.variant is Variant.JUMPRELU:
            thresholds = np.full(p, INITIAL_THRESHOLD)

    return Dictionary(
        d=d,
        b_pre=mean,
        encoder_weights=encoder_weights,
        encoder_bias=encoder_bias,
        thresholds=thresholds,
    )


def renormalize_columns(dictionary: Dictionary) -> tuple[Dictionary, RenormReport]:
    """
    Scale every decoder column to unit norm.

    Columns with norm below 1e-12 are replaced by the basis vector e_{j mod m}.

    Args:
        dictionary: Model to normalize (left unchanged)

    Returns:
        Tuple of (normalized copy, report with the old norms and replaced columns)
    """
    normalized = dictionary.copy()
    norms = column_norms(normalized.d)
    degenerate = np.flatnonzero(norms < DEGENERATE_NORM)

    healthy = norms >= DEGENERATE_NORM
    normalized.d[:, healthy] /= norms[healthy]

    for j in degenerate:
        basis = np.zeros(normalized.m)
        basis[j % normalized.m] = 1.0
        normalized.d[:, j] = basis

    if degenerate.size:
        logger.warning(f"Replaced {degenerate.size} degenerate atoms with basis vectors: {degenerate.tolist()}")

    return normalized, RenormReport(old_norms=norms, replaced=[int(j) for j in degenerate])
