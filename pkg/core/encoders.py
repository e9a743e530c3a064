"""
Encoder Zoo - Forward inference for the five SAE variants.

Shallow encoders compute u = W^T (x - b_pre) + b once and sparsify it
(ReLU, JumpReLU, TopK, BatchTopK). The MP encoder unrolls matching pursuit:
it repeatedly selects the atom most correlated with the residual, records its
coefficient and subtracts its contribution.

Batch functions return an EncodedBatch (dense codes plus the bookkeeping the
trainer needs); the single-sample functions wrap them and return SparseCode
objects.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from core.dictionary import Dictionary, EncoderConfig, Variant
from core.errors import DimensionError, InvariantError, shape_mismatch
from core.numeric import DenseMatrix, DenseVector

EARLY_EXIT_NORM = 1e-12


@dataclass
class SparseCode:
    """
    Sparse code of one sample.

    `indices`/`values` list the active entries in production order. For MP,
    `selection_order[i]` is the iteration t (1-based) that produced entry i and
    indices may repeat; dense() sums repeats.
    """

    p: int
    indices: np.ndarray
    values: np.ndarray
    selection_order: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.indices.shape != self.values.shape:
            raise shape_mismatch("sparse code", self.indices.shape, self.values.shape)
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.p):
            raise DimensionError(f"sparse code index out of range for p={self.p}")
        if self.selection_order is not None:
            self.selection_order = np.asarray(self.selection_order, dtype=np.int64).reshape(-1)

    @property
    def active(self) -> List[Tuple[int, float]]:
        """Ordered (index, coefficient) pairs."""
        return [(int(j), float(v)) for j, v in zip(self.indices, self.values)]

    def dense(self) -> DenseVector:
        """Length-p vector, duplicate indices summed."""
        z = np.zeros(self.p)
        np.add.at(z, self.indices, self.values)
        return z

    def support(self) -> np.ndarray:
        """Sorted distinct active indices."""
        return np.unique(self.indices)

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass
class InferenceTrace:
    """
    Residual norms of an inference run.

    MP traces hold ||r^(t)|| for t = 0..T (shorter after an early exit);
    shallow traces hold the single post-hoc residual norm.
    """

    residual_norms: np.ndarray
    partial_reconstructions: Optional[np.ndarray] = None


@dataclass
class EncodedBatch:
    """
    Result of encoding a batch.

    Attributes:
        z: Dense codes (B x p), MP repeats summed
        x_hat: Reconstructions (B x m)
        mask: Active-set mask (B x p)
        pre_activations: u = W^T (x - b_pre) + b for shallow variants
        mp_indices: Selected atoms per MP step (B x T), -1 after an early exit
        mp_coefficients: Coefficients per MP step (B x T), 0 after an early exit
        residual_norms: ||r^(t)|| for t = 0..T (B x (T+1)), NaN after an early exit
        residuals: Residual before each MP step and the final one (T+1 x B x m), kept on request
        partials: Partial reconstructions x_hat^(t) (T+1 x B x m), kept on request
    """

    z: DenseMatrix
    x_hat: DenseMatrix
    mask: np.ndarray
    pre_activations: Optional[DenseMatrix] = None
    mp_indices: Optional[np.ndarray] = None
    mp_coefficients: Optional[DenseMatrix] = None
    residual_norms: Optional[DenseMatrix] = None
    residuals: Optional[np.ndarray] = None
    partials: Optional[np.ndarray] = None

    @property
    def batch_size(self) -> int:
        return int(self.z.shape[0])

    @property
    def p(self) -> int:
        return int(self.z.shape[1])

    def code(self, i: int) -> SparseCode:
        """SparseCode of sample i (MP in selection order, shallow in index order)."""
        if self.mp_indices is not None:
            steps = self.mp_indices[i]
            taken = steps >= 0
            return SparseCode(
                p=self.p,
                indices=steps[taken],
                values=self.mp_coefficients[i][taken],
                selection_order=np.flatnonzero(taken) + 1,
            )
        active = np.flatnonzero(self.mask[i])
        return SparseCode(p=self.p, indices=active, values=self.z[i, active])

    def codes(self) -> List[SparseCode]:
        return [self.code(i) for i in range(self.batch_size)]

    def trace(self, i: int) -> InferenceTrace:
        """InferenceTrace of sample i."""
        partials = None if self.partials is None else self.partials[:, i, :]
        if self.residual_norms is None:
            return InferenceTrace(residual_norms=np.array([0.0]), partial_reconstructions=partials)
        norms = self.residual_norms[i]
        norms = norms[np.isfinite(norms)]
        if partials is not None:
            partials = partials[: norms.size]
        return InferenceTrace(residual_norms=norms, partial_reconstructions=partials)


def _check_batch(dictionary: Dictionary, X: DenseMatrix) -> DenseMatrix:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != dictionary.m:
        raise shape_mismatch("input batch vs dictionary", X.shape, ("B", dictionary.m))
    return X


def _check_sample(dictionary: Dictionary, x: DenseVector) -> DenseMatrix:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != dictionary.m:
        raise shape_mismatch("input vs dictionary rows", x.shape, (dictionary.m,))
    return x.reshape(1, -1)


def decode(dictionary: Dictionary, z: np.ndarray) -> np.ndarray:
    """x_hat = D z + b_pre for a code vector or a batch of code rows."""
    return z @ dictionary.d.T + dictionary.b_pre


def shallow_preactivations(dictionary: Dictionary, X: DenseMatrix) -> DenseMatrix:
    """u = W^T (x - b_pre) + b for every row of X (W = D when tied)."""
    X = _check_batch(dictionary, X)
    u = (X - dictionary.b_pre) @ dictionary.encoder_matrix
    if dictionary.encoder_bias is not None:
        u = u + dictionary.encoder_bias
    return u


def top_k_mask(scores: DenseMatrix, k: int) -> np.ndarray:
    """
    Per-row mask of the k largest strictly positive scores.

    Ties go to the lower index.
    """
    B, p = scores.shape
    mask = np.zeros((B, p), dtype=bool)
    if k <= 0 or p == 0:
        return mask
    keep = min(k, p)
    order = np.argsort(-scores, axis=1, kind="stable")[:, :keep]
    np.put_along_axis(mask, order, True, axis=1)
    return mask & (scores > 0)


def batch_top_k_mask(scores: DenseMatrix, k: int) -> np.ndarray:
    """
    Mask of the k * B largest strictly positive scores of the whole batch.

    Ties go to the lower sample index, then the lower atom index.
    """
    flat = scores.reshape(-1)
    mask = np.zeros(flat.shape, dtype=bool)
    budget = min(k * scores.shape[0], flat.size)
    if budget > 0:
        order = np.argsort(-flat, kind="stable")[:budget]
        mask[order] = True
    return (mask & (flat > 0)).reshape(scores.shape)


def _shallow_batch(dictionary: Dictionary, X: DenseMatrix, u: DenseMatrix, mask: np.ndarray) -> EncodedBatch:
    z = np.where(mask, u, 0.0)
    x_hat = decode(dictionary, z)
    norms = np.linalg.norm(np.asarray(X, dtype=np.float64) - x_hat, axis=1)[:, None]
    return EncodedBatch(z=z, x_hat=x_hat, mask=mask, pre_activations=u, residual_norms=norms)


def relu_batch(dictionary: Dictionary, X: DenseMatrix) -> EncodedBatch:
    """z = max(0, u)."""
    u = shallow_preactivations(dictionary, X)
    return _shallow_batch(dictionary, X, u, u > 0)


def jumprelu_batch(dictionary: Dictionary, X: DenseMatrix) -> EncodedBatch:
    """z_j = u_j * 1[u_j > theta_j]."""
    if dictionary.thresholds is None:
        raise InvariantError("jumprelu encoding requires thresholds")
    u = shallow_preactivations(dictionary, X)
    return _shallow_batch(dictionary, X, u, u > dictionary.thresholds)


def topk_batch(dictionary: Dictionary, X: DenseMatrix, k: int) -> EncodedBatch:
    """Keep the k largest positive pre-activations per sample."""
    u = shallow_preactivations(dictionary, X)
    return _shallow_batch(dictionary, X, u, top_k_mask(u, k))


def batchtopk_batch(dictionary: Dictionary, X: DenseMatrix, k: int) -> EncodedBatch:
    """Keep the k * B largest positive pre-activations of the batch."""
    X = _check_batch(dictionary, X)
    if X.shape[0] == 0:
        raise DimensionError("batchtopk needs a nonempty batch")
    u = shallow_preactivations(dictionary, X)
    return _shallow_batch(dictionary, X, u, batch_top_k_mask(u, k))


def mp_batch(
    dictionary: Dictionary,
    X: DenseMatrix,
    steps: int,
    absolute_argmax: bool = False,
    keep_residuals: bool = False,
    keep_partials: bool = False,
) -> EncodedBatch:
    """
    Unrolled matching pursuit over a batch.

    r^(0) = x - b_pre and x_hat^(0) = b_pre. Each step picks
    j = argmax_j (D^T r)_j (lowest index on ties; |D^T r| when absolute_argmax),
    sets z = D_j^T r and moves z D_j from the residual to the reconstruction.
    A sample stops once ||r|| < 1e-12; its remaining steps emit nothing.

    Args:
        dictionary: Normalized dictionary
        X: Batch (B x m)
        steps: Number of iterations T ≥ 0
        absolute_argmax: Select by absolute correlation
        keep_residuals: Keep r^(0..T) for backpropagation
        keep_partials: Keep x_hat^(0..T) for inspection

    Returns:
        EncodedBatch with MP bookkeeping filled in
    """
    X = _check_batch(dictionary, X)
    if steps < 0:
        raise ValueError(f"MP steps must be ≥ 0, got {steps}")

    D = dictionary.d
    B = X.shape[0]
    rows = np.arange(B)

    residual = X - dictionary.b_pre
    x_hat = np.broadcast_to(dictionary.b_pre, X.shape).copy()
    indices = np.full((B, steps), -1, dtype=np.int64)
    coefficients = np.zeros((B, steps))
    norms = np.full((B, steps + 1), np.nan)
    norms[:, 0] = np.linalg.norm(residual, axis=1)
    running = norms[:, 0] >= EARLY_EXIT_NORM

    history = [residual.copy()] if keep_residuals else None
    partials = [x_hat.copy()] if keep_partials else None

    for t in range(steps):
        if running.any():
            correlations = residual @ D
            scores = np.abs(correlations) if absolute_argmax else correlations
            chosen = np.argmax(scores, axis=1)
            coef = np.where(running, correlations[rows, chosen], 0.0)
            atoms = D[:, chosen].T
            contribution = coef[:, None] * atoms
            residual = residual - contribution
            x_hat = x_hat + contribution
            indices[running, t] = chosen[running]
            coefficients[running, t] = coef[running]
            norms[running, t + 1] = np.linalg.norm(residual[running], axis=1)
            running = running & (norms[:, t + 1] >= EARLY_EXIT_NORM)
        if keep_residuals:
            history.append(residual.copy())
        if keep_partials:
            partials.append(x_hat.copy())

    z = np.zeros((B, D.shape[1]))
    taken = indices >= 0
    sample_rows = np.broadcast_to(rows[:, None], indices.shape)
    np.add.at(z, (sample_rows[taken], indices[taken]), coefficients[taken])
    mask = np.zeros((B, D.shape[1]), dtype=bool)
    mask[sample_rows[taken], indices[taken]] = True

    return EncodedBatch(
        z=z,
        x_hat=x_hat,
        mask=mask,
        mp_indices=indices,
        mp_coefficients=coefficients,
        residual_norms=norms,
        residuals=np.stack(history) if keep_residuals else None,
        partials=np.stack(partials) if keep_partials else None,
    )


def encode_batch(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    X: DenseMatrix,
    k: Optional[int] = None,
    keep_residuals: bool = False,
    keep_partials: bool = False,
) -> EncodedBatch:
    """
    Encode a batch with the variant named by cfg.

    Args:
        dictionary: Model parameters
        cfg: Encoder config
        X: Batch (B x m)
        k: Inference-time sparsity override (TopK/BatchTopK k, MP steps); cfg.k when None
        keep_residuals: MP only, keep residual history
        keep_partials: Keep partial reconstructions (MP: every step; shallow: final only)

    Returns:
        EncodedBatch
    """
    k = cfg.k if k is None else k
    if cfg.variant is Variant.MP:
        return mp_batch(dictionary, X, k, cfg.absolute_argmax, keep_residuals, keep_partials)
    if cfg.variant is Variant.RELU:
        return relu_batch(dictionary, X)
    if cfg.variant is Variant.JUMPRELU:
        return jumprelu_batch(dictionary, X)
    if cfg.variant is Variant.TOPK:
        return topk_batch(dictionary, X, k)
    return batchtopk_batch(dictionary, X, k)


def encode_relu(dictionary: Dictionary, x: DenseVector) -> SparseCode:
    """ReLU code of one sample."""
    return relu_batch(dictionary, _check_sample(dictionary, x)).code(0)


def encode_jumprelu(dictionary: Dictionary, x: DenseVector) -> SparseCode:
    """JumpReLU code of one sample."""
    return jumprelu_batch(dictionary, _check_sample(dictionary, x)).code(0)


def encode_topk(dictionary: Dictionary, x: DenseVector, k: int) -> SparseCode:
    """TopK code of one sample."""
    return topk_batch(dictionary, _check_sample(dictionary, x), k).code(0)


def encode_batchtopk(dictionary: Dictionary, X: DenseMatrix, k: int) -> List[SparseCode]:
    """BatchTopK codes of a batch (selection budget k * B shared by all samples)."""
    return batchtopk_batch(dictionary, X, k).codes()


def encode_mp(
    dictionary: Dictionary,
    x: DenseVector,
    steps: int,
    absolute_argmax: bool = False,
    record_partials: bool = False,
) -> Tuple[SparseCode, InferenceTrace]:
    """
    Matching-pursuit code and trace of one sample.

    Args:
        dictionary: Normalized dictionary
        x: Input of length m
        steps: Iterations T
        absolute_argmax: Select by |D^T r|
        record_partials: Keep x_hat^(0..T) in the trace

    Returns:
        Tuple of (SparseCode in selection order, InferenceTrace)
    """
    batch = mp_batch(dictionary, _check_sample(dictionary, x), steps, absolute_argmax, keep_partials=record_partials)
    return batch.code(0), batch.trace(0)


def final_residual(X: DenseMatrix, batch: EncodedBatch) -> DenseMatrix:
    """x - x_hat per row."""
    return X - batch.x_hat
