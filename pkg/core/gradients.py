"""
Loss and hand-derived reverse-mode gradients for every encoder variant.

Loss per batch (mean over samples):
    recon  = mean_i ||x_i - x_hat_i||^2
    sparse = lambda * mean_i ||z_i||_1          (ReLU)
           = target_l0 * mean_i ||z_i||_0       (JumpReLU)
    aux    = alpha * mean_i ||e_i - e_hat_i||^2 (dead-atom revival, e = x - x_hat held constant)

Differentiation conventions: selections (ReLU/JumpReLU masks, TopK masks, MP
atom indices, aux picks) are constants. MP gradients flow through every
coefficient z^(t) = D_j^T r^(t-1) and every residual update of the unrolled
graph unless `detach_residual` is set, in which case coefficients are treated as
constants and only the decode path is differentiated. JumpReLU thresholds get
straight-through gradients with a rectangular kernel of width ste_bandwidth.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from core.dictionary import Dictionary, EncoderConfig, Variant
from core.encoders import EncodedBatch, encode_batch
from core.errors import DimensionError, NumericError
from core.numeric import DenseMatrix, ensure_finite


class LossBreakdown(BaseModel):
    """Batch loss terms; total is their sum."""

    recon: float
    sparsity_penalty: float
    aux: float
    total: float
    l0: float

    @classmethod
    def from_terms(cls, recon: float, sparsity_penalty: float, aux: float, l0: float) -> "LossBreakdown":
        return cls(
            recon=recon,
            sparsity_penalty=sparsity_penalty,
            aux=aux,
            total=recon + sparsity_penalty + aux,
            l0=l0,
        )


@dataclass
class GradientSet:
    """Gradients shaped like their parameters; optional entries follow the Dictionary."""

    d_D: DenseMatrix
    d_b_pre: np.ndarray
    d_W: Optional[DenseMatrix] = None
    d_b: Optional[np.ndarray] = None
    d_theta: Optional[np.ndarray] = None

    def as_dict(self) -> Dict[str, np.ndarray]:
        """Gradients keyed by checkpoint array name."""
        named = {"D": self.d_D, "b_pre": self.d_b_pre}
        if self.d_W is not None:
            named["W"] = self.d_W
        if self.d_b is not None:
            named["b"] = self.d_b
        if self.d_theta is not None:
            named["theta"] = self.d_theta
        return named


@dataclass
class StepResult:
    """Forward/backward output of one batch."""

    loss: LossBreakdown
    grads: GradientSet
    encoded: EncodedBatch


def aux_selection(
    scores: DenseMatrix,
    dead_mask: np.ndarray,
    aux_k: int,
    absolute: bool = False,
) -> np.ndarray:
    """
    Mask of the aux_k best-scoring dead atoms per sample.

    Only strictly positive scores qualify (nonzero scores when absolute).
    Ties go to the lower atom index.
    """
    ranked = np.abs(scores) if absolute else scores
    ranked = np.where(dead_mask[None, :], ranked, -np.inf)
    keep = min(aux_k, scores.shape[1])
    mask = np.zeros(scores.shape, dtype=bool)
    if keep > 0:
        order = np.argsort(-ranked, axis=1, kind="stable")[:, :keep]
        np.put_along_axis(mask, order, True, axis=1)
    return mask & (ranked > 0)


def _check_inputs(dictionary: Dictionary, cfg: EncoderConfig, X: DenseMatrix, dead_mask: Optional[np.ndarray]):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError(f"loss needs a nonempty batch, got shape {X.shape}")
    if X.shape[1] != dictionary.m:
        raise DimensionError(f"batch width {X.shape[1]} does not match dictionary m={dictionary.m}")
    if dead_mask is None:
        dead_mask = np.zeros(dictionary.p, dtype=bool)
    dead_mask = np.asarray(dead_mask, dtype=bool)
    if dead_mask.shape != (dictionary.p,):
        raise DimensionError(f"dead mask shape {dead_mask.shape} does not match p={dictionary.p}")
    dictionary.check_config(cfg)
    cfg.check_against(dictionary.p)
    return X, dead_mask


def _raise_if_non_finite(per_sample: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(per_sample))
    if bad.size:
        raise NumericError(f"non-finite loss at batch index {int(bad[0])}")


def _shallow_step(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    X: DenseMatrix,
    dead_mask: np.ndarray,
    with_grads: bool,
) -> StepResult:
    B = X.shape[0]
    encoded = encode_batch(dictionary, cfg, X)
    u = encoded.pre_activations
    mask = encoded.mask
    z = encoded.z
    D = dictionary.d

    residual = X - encoded.x_hat
    per_sample = np.einsum("ij,ij->i", residual, residual)

    if cfg.variant is Variant.RELU:
        per_sample_penalty = cfg.lambda_ * z.sum(axis=1)
    elif cfg.variant is Variant.JUMPRELU:
        per_sample_penalty = cfg.target_l0 * mask.sum(axis=1)
    else:
        per_sample_penalty = np.zeros(B)
    sparsity = float(per_sample_penalty.mean())

    alpha = cfg.resolved_aux_alpha()
    aux_mask = None
    aux = 0.0
    per_sample_aux = np.zeros(B)
    if alpha > 0 and dead_mask.any():
        aux_mask = aux_selection(u, dead_mask, cfg.resolved_aux_k(dictionary.p))
        aux_codes = np.where(aux_mask, u, 0.0)
        aux_diff = residual - aux_codes @ D.T
        per_sample_aux = alpha * np.einsum("ij,ij->i", aux_diff, aux_diff)
        aux = float(per_sample_aux.mean())

    _raise_if_non_finite(per_sample + per_sample_penalty + per_sample_aux)
    loss = LossBreakdown.from_terms(
        recon=float(per_sample.mean()),
        sparsity_penalty=sparsity,
        aux=aux,
        l0=float(mask.sum(axis=1).mean()),
    )
    if not with_grads:
        return StepResult(loss=loss, grads=None, encoded=encoded)

    x_centered = X - dictionary.b_pre
    W = dictionary.encoder_matrix

    grad_xhat = -2.0 * residual / B
    d_D = grad_xhat.T @ z
    d_z = grad_xhat @ D
    if cfg.variant is Variant.RELU:
        d_z = d_z + cfg.lambda_ / B

    d_u = np.where(mask, d_z, 0.0)
    if aux_mask is not None:
        grad_aux = -2.0 * alpha * aux_diff / B
        d_D += grad_aux.T @ aux_codes
        d_u += np.where(aux_mask, grad_aux @ D, 0.0)

    d_theta = None
    if cfg.variant is Variant.JUMPRELU:
        d_theta = np.zeros(dictionary.p)
        bandwidth = cfg.ste_bandwidth
        if bandwidth > 0:
            theta = dictionary.thresholds
            kernel = (np.abs(u - theta) < bandwidth / 2.0).astype(np.float64)
            d_theta = (d_z * kernel).sum(axis=0) * (-theta / bandwidth)
            d_theta += (cfg.target_l0 / B) * kernel.sum(axis=0) * (-1.0 / bandwidth)

    d_b_pre = grad_xhat.sum(axis=0) - (d_u @ W.T).sum(axis=0)
    d_W = None
    encoder_grad = x_centered.T @ d_u
    if cfg.has_encoder_weights:
        d_W = encoder_grad
    else:
        d_D = d_D + encoder_grad
    d_b = d_u.sum(axis=0)

    grads = GradientSet(d_D=d_D, d_b_pre=d_b_pre, d_W=d_W, d_b=d_b, d_theta=d_theta)
    return StepResult(loss=loss, grads=grads, encoded=encoded)


def _mp_step(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    X: DenseMatrix,
    dead_mask: np.ndarray,
    with_grads: bool,
) -> StepResult:
    B = X.shape[0]
    D = dictionary.d
    keep = with_grads and not cfg.detach_residual
    encoded = encode_batch(dictionary, cfg, X, keep_residuals=keep)

    residual = X - encoded.x_hat
    per_sample = np.einsum("ij,ij->i", residual, residual)

    alpha = cfg.resolved_aux_alpha()
    aux_mask = None
    aux = 0.0
    per_sample_aux = np.zeros(B)
    if alpha > 0 and dead_mask.any():
        correlations = residual @ D
        aux_mask = aux_selection(correlations, dead_mask, cfg.resolved_aux_k(dictionary.p), cfg.absolute_argmax)
        aux_codes = np.where(aux_mask, correlations, 0.0)
        aux_diff = residual - aux_codes @ D.T
        per_sample_aux = alpha * np.einsum("ij,ij->i", aux_diff, aux_diff)
        aux = float(per_sample_aux.mean())

    _raise_if_non_finite(per_sample + per_sample_aux)
    loss = LossBreakdown.from_terms(
        recon=float(per_sample.mean()),
        sparsity_penalty=0.0,
        aux=aux,
        l0=float(encoded.mask.sum(axis=1).mean()),
    )
    if not with_grads:
        return StepResult(loss=loss, grads=None, encoded=encoded)

    d_D = np.zeros_like(D)
    d_D_rows = d_D.T
    # g holds dL/dr^(t), starting from r^(T) = x - x_hat
    g = 2.0 * residual / B
    steps = encoded.mp_indices.shape[1]
    rows = np.arange(B)

    if cfg.detach_residual:
        for t in range(steps):
            chosen = encoded.mp_indices[:, t]
            live = chosen >= 0
            coef = encoded.mp_coefficients[live, t]
            np.add.at(d_D_rows, chosen[live], -coef[:, None] * g[live])
        d_b_pre = -g.sum(axis=0)
    else:
        for t in range(steps - 1, -1, -1):
            chosen = encoded.mp_indices[:, t]
            live = chosen >= 0
            if not live.any():
                continue
            atoms = D[:, chosen[live]].T
            coef = encoded.mp_coefficients[live, t]
            r_prev = encoded.residuals[t][rows[live]]
            g_live = g[live]
            d_coef = -np.einsum("ij,ij->i", atoms, g_live)
            np.add.at(d_D_rows, chosen[live], -coef[:, None] * g_live + d_coef[:, None] * r_prev)
            g[live] = g_live + d_coef[:, None] * atoms
        d_b_pre = -g.sum(axis=0)

    if aux_mask is not None:
        grad_aux = -2.0 * alpha * aux_diff / B
        d_D += grad_aux.T @ aux_codes
        d_D += residual.T @ np.where(aux_mask, grad_aux @ D, 0.0)

    grads = GradientSet(d_D=d_D, d_b_pre=d_b_pre)
    return StepResult(loss=loss, grads=grads, encoded=encoded)


def forward_backward(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    X: DenseMatrix,
    dead_mask: Optional[np.ndarray] = None,
    with_grads: bool = True,
) -> StepResult:
    """
    Forward pass, loss and (optionally) gradients of one batch.

    Args:
        dictionary: Current parameters
        cfg: Encoder config
        X: Batch (B x m), B ≥ 1
        dead_mask: Atoms currently dead (length p); no aux term when None or empty
        with_grads: Skip the backward pass when False (grads is None)

    Returns:
        StepResult with loss breakdown, gradients and the encoded batch

    Raises:
        DimensionError: Empty batch or width mismatch
        NumericError: Non-finite loss (names the first bad batch index) or gradient
    """
    X, dead_mask = _check_inputs(dictionary, cfg, X, dead_mask)
    if cfg.variant is Variant.MP:
        result = _mp_step(dictionary, cfg, X, dead_mask, with_grads)
    else:
        result = _shallow_step(dictionary, cfg, X, dead_mask, with_grads)

    if result.grads is not None:
        for name, grad in result.grads.as_dict().items():
            ensure_finite(grad, f"gradient of {name}")
    return result


def loss_and_gradients(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    batch: DenseMatrix,
    dead_mask: Optional[np.ndarray] = None,
) -> Tuple[LossBreakdown, GradientSet]:
    """
    Loss breakdown and exact gradients of the batch loss.

    Returns:
        Tuple of (LossBreakdown, GradientSet)
    """
    result = forward_backward(dictionary, cfg, batch, dead_mask)
    return result.loss, result.grads


def batch_loss(
    dictionary: Dictionary,
    cfg: EncoderConfig,
    batch: DenseMatrix,
    dead_mask: Optional[np.ndarray] = None,
) -> LossBreakdown:
    """Loss breakdown without the backward pass."""
    return forward_backward(dictionary, cfg, batch, dead_mask, with_grads=False).loss
