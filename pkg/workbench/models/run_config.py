"""
Run Configuration Models - Validated parameter bundles for every CLI command.

Each command merges settings, --config file values and flags into one of these
models before any computation starts. Field names match the flag names
(`batch_size` <-> `--batch-size`).
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.datasets import SyntheticSpec
from core.dictionary import EncoderConfig, Variant
from core.optimizer import AdamHyper, LRSchedule
from core.trainer import default_schedule


class RunParams(BaseModel):
    """Parameters shared by every command."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0, description="Run seed")
    out_dir: Path = Field(default=Path("runs"), description="Output directory")

    def to_json(self, command: str) -> str:
        """Effective config as sorted-key JSON (no timestamps, byte-stable)."""
        payload: Dict[str, Any] = self.model_dump(mode="json")
        payload["command"] = command
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


class DataParams(BaseModel):
    data: Path = Field(..., description="MNIST IDX image file or activation container")
    labels: Optional[Path] = Field(default=None, description="MNIST IDX label file")
    limit: Optional[int] = Field(default=None, ge=1, description="Use at most this many samples")


class EncoderParams(BaseModel):
    """Hyperparameters of the encoder variants (everything except variant and k)."""

    lambda_l1: float = Field(default=1e-3, ge=0)
    target_l0: float = Field(default=1e-3, ge=0)
    aux_alpha: Optional[float] = Field(default=None, ge=0)
    aux_k: Optional[int] = Field(default=None, ge=1)
    dead_steps_threshold: int = Field(default=256, ge=0)
    ste_bandwidth: float = Field(default=0.001, ge=0)
    tied: bool = False
    absolute_argmax: bool = False
    detach_residual: bool = False
    freeze_b_pre: bool = False

    def encoder_config(self, variant: Variant, k: int) -> EncoderConfig:
        return EncoderConfig(
            variant=variant,
            k=k,
            lambda_=self.lambda_l1,
            target_l0=self.target_l0,
            aux_alpha=self.aux_alpha,
            aux_k=self.aux_k,
            dead_steps_threshold=self.dead_steps_threshold,
            ste_bandwidth=self.ste_bandwidth,
            tied=self.tied,
            absolute_argmax=self.absolute_argmax,
            detach_residual=self.detach_residual,
            freeze_b_pre=self.freeze_b_pre,
        )


class OptimizerParams(BaseModel):
    epochs: int = Field(default=50, ge=0)
    batch_size: int = Field(default=256, ge=1)
    lr_init: float = Field(default=5e-4, ge=0)
    lr_final: float = Field(default=1e-6, ge=0)
    warmup_steps: Optional[int] = Field(default=None, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    log_every: int = Field(default=10, ge=1)

    def schedule(self, n: int) -> LRSchedule:
        return default_schedule(n, self.epochs, self.batch_size, self.lr_init, self.lr_final, self.warmup_steps)

    def adam(self) -> AdamHyper:
        return AdamHyper(beta1=self.beta1, beta2=self.beta2, eps=self.adam_eps)


def _check_k(variant: Variant, k: int, p: int) -> None:
    if variant.uses_k and k > p:
        raise ValueError(f"k ≤ p required for {variant.value} (k={k}, p={p})")


class TrainRunConfig(RunParams, DataParams, EncoderParams, OptimizerParams):
    """Parameters of `train`."""

    variant: Variant = Variant.MP
    k: int = 10
    p: int = Field(default=1000, ge=1)

    @field_validator("k")
    @classmethod
    def _k_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("k ≥ 1")
        return value

    @model_validator(mode="after")
    def _k_within_p(self) -> "TrainRunConfig":
        _check_k(self.variant, self.k, self.p)
        if self.aux_k is not None and self.aux_k > self.p:
            raise ValueError(f"aux_k ≤ p required (aux_k={self.aux_k}, p={self.p})")
        return self

    def encoder(self) -> EncoderConfig:
        return self.encoder_config(self.variant, self.k)


class SweepRunConfig(RunParams, DataParams, EncoderParams, OptimizerParams):
    """Parameters of `sweep`: every (variant, k, p, seed) cell is trained and scored."""

    variants: List[Variant] = Field(default_factory=lambda: [Variant.MP])
    ks: List[int] = Field(default_factory=lambda: [10])
    ps: List[int] = Field(default_factory=lambda: [1000])
    seeds: List[int] = Field(default_factory=lambda: [0])
    eval_data: Optional[Path] = Field(default=None, description="Held-out data for R²; training data when unset")
    eval_labels: Optional[Path] = None
    eval_limit: Optional[int] = Field(default=None, ge=1)
    workers: int = Field(default=1, ge=1)

    @field_validator("variants", "ks", "ps", "seeds")
    @classmethod
    def _non_empty(cls, value: list) -> list:
        if not value:
            raise ValueError("grid axis must not be empty")
        return value

    @field_validator("ks", "ps")
    @classmethod
    def _positive(cls, value: List[int]) -> List[int]:
        if any(v < 1 for v in value):
            raise ValueError("grid values must be ≥ 1")
        return value

    @field_validator("seeds")
    @classmethod
    def _seeds_non_negative(cls, value: List[int]) -> List[int]:
        if any(v < 0 for v in value):
            raise ValueError("seeds must be ≥ 0")
        return value

    @model_validator(mode="after")
    def _cells_feasible(self) -> "SweepRunConfig":
        for variant in self.variants:
            for k in self.ks:
                for p in self.ps:
                    _check_k(variant, k, p)
        return self


class EvalRunConfig(RunParams, DataParams):
    """Parameters of `eval`."""

    checkpoint: Path
    ks: List[int] = Field(default_factory=list, description="Inference k values for r2.csv; checkpoint k when empty")
    babel_orders: List[int] = Field(default_factory=lambda: [1, 2, 5, 10])
    coact_orders: List[Optional[int]] = Field(
        default_factory=lambda: [1, None],
        description="Co-activation Babel orders; None means each sample's |S| - 1",
    )
    k_max: int = Field(default=50, ge=1, description="Residual curve runs k = 1..k_max")

    @field_validator("ks", "babel_orders")
    @classmethod
    def _positive(cls, value: List[int]) -> List[int]:
        if any(v < 1 for v in value):
            raise ValueError("values must be ≥ 1")
        return value

    @field_validator("coact_orders")
    @classmethod
    def _coact_positive(cls, value: List[Optional[int]]) -> List[Optional[int]]:
        if any(v is not None and v < 1 for v in value):
            raise ValueError("orders must be ≥ 1")
        return value


class InspectRunConfig(RunParams, DataParams):
    """Parameters of `inspect`."""

    checkpoint: Path
    samples: List[int] = Field(default_factory=lambda: [0])
    k: Optional[int] = Field(default=None, ge=1, description="Inference k; checkpoint k when unset")

    @field_validator("samples")
    @classmethod
    def _samples(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("at least one sample index is required")
        if any(v < 0 for v in value):
            raise ValueError("sample indices must be ≥ 0")
        return value


class ExportAtomsRunConfig(RunParams):
    """Parameters of `export-atoms`."""

    model_config = ConfigDict(extra="forbid")

    checkpoint: Path
    data: Optional[Path] = Field(default=None, description="Dataset used to rank atoms")
    labels: Optional[Path] = None
    limit: Optional[int] = Field(default=None, ge=1)
    top_n: int = Field(default=25, ge=1)
    k: Optional[int] = Field(default=None, ge=1)


class SyntheticRunConfig(RunParams, SyntheticSpec):
    """Parameters of `gen-synthetic`."""

    dtype: Literal["f64", "f32"] = "f64"

    def spec(self) -> SyntheticSpec:
        return SyntheticSpec(**self.model_dump(include=set(SyntheticSpec.model_fields)))


class RecoveryRunConfig(RunParams):
    """Parameters of `recovery-score`."""

    checkpoint: Path
    truth: Path = Field(..., description="Ground-truth checkpoint written by gen-synthetic")
    threshold: float = Field(default=0.9, ge=0, le=1)
