"""
Metrics - Evaluation quantities for trained dictionaries.

Reconstruction (R², residual-decay curves), dictionary geometry (mutual
coherence, Babel function) and code statistics (activation frequency and
value, selection position, co-activated Babel).
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from core.dictionary import Dictionary, EncoderConfig, Variant
from core.encoders import SparseCode, encode_batch, mp_batch
from core.errors import ConfigError, DimensionError, InvariantError, NoEligibleSampleError, NumericError, shape_mismatch
from core.numeric import DenseMatrix, column_norms

logger = logging.getLogger(__name__)

UNIT_NORM_TOLERANCE = 1e-6
QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)


def r_squared(X: DenseMatrix, X_hat: DenseMatrix) -> float:
    """
    Global coefficient of determination.

    1 - sum_i ||x_i - x_hat_i||^2 / sum_i ||x_i - mean(x)||^2, with the batch
    mean as baseline.

    Raises:
        DimensionError: Shapes differ or fewer than 2 samples
        NumericError: Constant batch (zero denominator)
    """
    X = np.asarray(X, dtype=np.float64)
    X_hat = np.asarray(X_hat, dtype=np.float64)
    if X.shape != X_hat.shape or X.ndim != 2:
        raise shape_mismatch("r_squared inputs", X.shape, X_hat.shape)
    if X.shape[0] < 2:
        raise DimensionError(f"r_squared needs at least 2 samples, got {X.shape[0]}")

    residual = float(np.sum((X - X_hat) ** 2))
    spread = float(np.sum((X - X.mean(axis=0)) ** 2))
    if spread == 0.0:
        raise NumericError("r_squared undefined for a constant batch (zero variance)")
    return 1.0 - residual / spread


def _abs_gram(D: DenseMatrix) -> DenseMatrix:
    """|D^T D| with a zeroed diagonal, after checking unit-norm columns."""
    D = np.asarray(D, dtype=np.float64)
    deviation = np.max(np.abs(column_norms(D) - 1.0)) if D.shape[1] else 0.0
    if deviation > UNIT_NORM_TOLERANCE:
        raise InvariantError(f"columns must be unit-norm (max deviation {deviation:.3e})")
    gram = np.abs(D.T @ D)
    np.fill_diagonal(gram, 0.0)
    return gram


def mutual_coherence(D: DenseMatrix) -> float:
    """
    max_{i != j} |D_i^T D_j|.

    Raises:
        DimensionError: Fewer than 2 atoms
        InvariantError: Columns not unit-norm within 1e-6
    """
    if D.shape[1] < 2:
        raise DimensionError(f"mutual coherence needs p ≥ 2, got p={D.shape[1]}")
    return float(_abs_gram(D).max())


def _sorted_off_diagonal(D: DenseMatrix) -> DenseMatrix:
    """Per column, the off-diagonal |Gram| entries in descending order ((p-1) x p)."""
    gram = _abs_gram(D)
    p = gram.shape[0]
    off = gram[~np.eye(p, dtype=bool)].reshape(p, p - 1)
    return -np.sort(-off, axis=1).T


def babel(D: DenseMatrix, r: int) -> float:
    """
    Babel function mu_1(r).

    Evaluated in closed form: per atom, sum its r largest absolute
    correlations with other atoms, then take the max over atoms.

    Raises:
        ConfigError: r outside [1, p-1]
        InvariantError: Columns not unit-norm
    """
    p = D.shape[1]
    if not 1 <= r <= p - 1:
        raise ConfigError(f"babel order must satisfy 1 ≤ r ≤ p-1 = {p - 1}, got r={r}")
    top = _sorted_off_diagonal(D)[:r]
    return float(top.sum(axis=0).max())


class BabelCurve(BaseModel):
    orders: List[int]
    values: List[float]


def babel_curve(D: DenseMatrix, orders: Iterable[int]) -> BabelCurve:
    """mu_1(r) for every requested order, sharing one sorted Gram."""
    orders = [int(r) for r in orders]
    p = D.shape[1]
    for r in orders:
        if not 1 <= r <= p - 1:
            raise ConfigError(f"babel order must satisfy 1 ≤ r ≤ p-1 = {p - 1}, got r={r}")
    cumulative = np.cumsum(_sorted_off_diagonal(D), axis=0) if orders else None
    values = [float(cumulative[r - 1].max()) for r in orders]
    return BabelCurve(orders=orders, values=values)


class CoactivationSummary(BaseModel):
    """Distribution of per-sample restricted Babel values."""

    order: Optional[int]
    evaluated: int
    skipped: int
    mean: float
    max: float
    quantiles: List[float]

    @property
    def order_label(self) -> str:
        return "support-1" if self.order is None else str(self.order)


def coactivation_babel(
    codes: Sequence[SparseCode],
    D: DenseMatrix,
    r: Optional[int] = 1,
) -> CoactivationSummary:
    """
    Babel of the atoms co-activated by each sample.

    For every sample with deduplicated support S and |S| > r, computes mu_1(r) of
    D[:, S]; samples with |S| ≤ r are skipped and counted. r=None uses each
    sample's own order |S| - 1.

    Returns:
        CoactivationSummary with mean, max and the 5/25/50/75/95% quantiles

    Raises:
        ConfigError: r < 1
        NoEligibleSampleError: No sample is eligible
    """
    if r is not None and r < 1:
        raise ConfigError(f"co-activation babel order must be ≥ 1, got {r}")
    _abs_gram(D)

    values = []
    skipped = 0
    for code in codes:
        support = code.support()
        order = support.size - 1 if r is None else r
        if order < 1 or support.size <= order:
            skipped += 1
            continue
        values.append(babel(D[:, support], order))

    if not values:
        raise NoEligibleSampleError(f"no sample has more than r active atoms (r={r}, skipped {skipped})")
    if skipped:
        logger.warning(f"Co-activation babel (r={r}): skipped {skipped} of {skipped + len(values)} samples")

    values = np.asarray(values)
    return CoactivationSummary(
        order=r,
        evaluated=int(values.size),
        skipped=skipped,
        mean=float(values.mean()),
        max=float(values.max()),
        quantiles=[float(q) for q in np.quantile(values, QUANTILES)],
    )


@dataclass
class ActivationStats:
    """
    Per-atom activation statistics over a batch of codes.

    mean_selection_step is the mean 1-based position at which the atom first
    entered a code: the MP iteration for MP codes, the rank by descending value for
    shallow codes. NaN for atoms never selected (same for mean_value_when_active).
    """

    freq: np.ndarray
    mean_value: np.ndarray
    mean_value_when_active: np.ndarray
    mean_selection_step: np.ndarray

    @property
    def p(self) -> int:
        return int(self.freq.shape[0])

    def rank_by_frequency(self) -> np.ndarray:
        """Atom indices, most frequent first (lower index on ties)."""
        return np.argsort(-self.freq, kind="stable")

    def rank_by_value(self) -> np.ndarray:
        """Atom indices by descending mean value (lower index on ties)."""
        return np.argsort(-self.mean_value, kind="stable")


def selection_positions(code: SparseCode) -> np.ndarray:
    """
    1-based selection position of every entry of a code.

    MP codes carry their iteration index; shallow codes are ranked by
    descending value, ties to the lower atom index.
    """
    if code.selection_order is not None:
        return code.selection_order
    order = np.lexsort((code.indices, -code.values))
    positions = np.empty(len(code), dtype=np.int64)
    positions[order] = np.arange(1, len(code) + 1)
    return positions


def activation_stats(codes: Sequence[SparseCode], p: int) -> ActivationStats:
    """
    Frequency, mean value, conditional mean and mean selection position per atom.

    Frequencies use deduplicated supports; values use coefficient sums, so an
    MP atom picked twice counts once in freq with the summed coefficient.

    Raises:
        DimensionError: Empty batch or a code index ≥ p
    """
    if len(codes) == 0:
        raise DimensionError("activation_stats needs at least one code")

    active_count = np.zeros(p)
    value_sum = np.zeros(p)
    step_sum = np.zeros(p)
    step_count = np.zeros(p)
    for code in codes:
        if code.p != p or (len(code) and code.indices.max() >= p):
            raise DimensionError(f"code with p={code.p} does not match p={p}")
        dense = code.dense()
        active_count[code.support()] += 1
        value_sum += dense
        # first pick only; MP may revisit an atom
        first = np.full(p, np.iinfo(np.int64).max)
        np.minimum.at(first, code.indices, selection_positions(code))
        picked = first < np.iinfo(np.int64).max
        step_sum[picked] += first[picked]
        step_count[picked] += 1

    n = len(codes)
    with np.errstate(invalid="ignore", divide="ignore"):
        when_active = np.where(active_count > 0, value_sum / active_count, np.nan)
        mean_step = np.where(step_count > 0, step_sum / step_count, np.nan)
    return ActivationStats(
        freq=active_count / n,
        mean_value=value_sum / n,
        mean_value_when_active=when_active,
        mean_selection_step=mean_step,
    )


class ResidualCurve(BaseModel):
    ks: List[int]
    mean_errors: List[float]


def residual_curve(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    X: DenseMatrix,
    k_max: int,
) -> ResidualCurve:
    """
    Mean ||x - x_hat||^2 at every inference sparsity k = 1..k_max.

    MP runs k_max steps once and reads each prefix; TopK/BatchTopK re-encode
    at every k; ReLU/JumpReLU ignore k and report a flat curve.

    Raises:
        ConfigError: k_max < 1
        DimensionError: Data width differs from the dictionary
    """
    if k_max < 1:
        raise ConfigError(f"k_max must be ≥ 1, got {k_max}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != dictionary.m:
        raise shape_mismatch("residual_curve data vs dictionary", X.shape, ("N", dictionary.m))
    ks = list(range(1, k_max + 1))

    if cfg.variant is Variant.MP:
        norms = mp_batch(dictionary, X, k_max, cfg.absolute_argmax).residual_norms
        # after an early exit a sample keeps its last residual
        finite = np.isfinite(norms)
        last = np.maximum.accumulate(np.where(finite, np.arange(norms.shape[1]), 0), axis=1)
        filled = np.take_along_axis(norms, last, axis=1)
        errors = (filled[:, 1:] ** 2).mean(axis=0)
        return ResidualCurve(ks=ks, mean_errors=[float(e) for e in errors])

    if cfg.variant in (Variant.RELU, Variant.JUMPRELU):
        flat = _mean_squared_error(X, encode_batch(dictionary, cfg, X).x_hat)
        return ResidualCurve(ks=ks, mean_errors=[flat] * k_max)

    errors = [_mean_squared_error(X, encode_batch(dictionary, cfg, X, k=k).x_hat) for k in ks]
    return ResidualCurve(ks=ks, mean_errors=errors)


def _mean_squared_error(X: DenseMatrix, X_hat: DenseMatrix) -> float:
    return float(np.mean(np.sum((X - X_hat) ** 2, axis=1)))
