"""Contrastive matching loss with margin-relaxed Euclidean similarity,
its analytic gradients, and a small Adam optimizer.

Per position (i, j) the prototypes split into positives (the n_pos nearest)
and negatives; each prototype contributes a logit -max(dist - r, 0)/tau and
the per-position loss is the negative log of the positive share of the
softmax mass.  The total averages over the H*W grid.  Gradients treat the
positive/negative assignment as fixed (no gradient through the selection).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .memory import PrototypeBank, _dists, pos_neg_masks
from .tensor_core import as_tensor3


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.1
    r: float = 1e-5
    n_pos: int = 3

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be > 0")
        if self.r < 0:
            raise ConfigError("margin r must be >= 0")
        if self.n_pos < 1:
            raise ConfigError("n_pos must be >= 1")


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("betas must be in (0, 1)")


def margin_dist(d: float, r: float) -> float:
    """Distance relaxed by the margin r: max(d - r, 0)."""
    if d < 0:
        raise ConfigError("distance must be >= 0")
    return max(d - r, 0.0)


def _softmax_terms(dist: np.ndarray, pos_mask: np.ndarray, cfg: LossConfig):
    """Shifted softmax pieces for rows of distances.

    Returns (loss_per_row, s, s_pos_sum, s_all_sum); the row max logit always
    belongs to a positive (positives are the nearest prototypes), so the
    positive mass never underflows to zero.
    """
    logits = -np.maximum(dist - cfg.r, 0.0) / cfg.tau
    shift = logits.max(axis=1, keepdims=True)
    s = np.exp(logits - shift)
    s_all = s.sum(axis=1)
    s_pos = (s * pos_mask).sum(axis=1)
    loss_rows = np.log(s_all) - np.log(s_pos)
    return loss_rows, s, s_pos, s_all


def loss_given_assignment(z: np.ndarray, protos: np.ndarray,
                          pos_mask: np.ndarray, cfg: LossConfig) -> float:
    """Loss value only, with a caller-fixed positive mask (float64 path).

    This is the function the gradients differentiate; finite-difference
    oracles should perturb inputs through here.
    """
    zt = np.asarray(z, dtype=np.float64)
    d, h, w = zt.shape
    flat = zt.reshape(d, h * w).T
    dist = _dists(flat, np.asarray(protos, dtype=np.float64))
    loss_rows, _, _, _ = _softmax_terms(dist, pos_mask, cfg)
    return float(loss_rows.mean())


def anonce_loss(z: np.ndarray, bank: PrototypeBank, cfg: LossConfig):
    """Total loss plus analytic gradients w.r.t. features and prototypes.

    Returns ``(loss, grad_z, grad_p)`` with gradients matching central
    finite differences of :func:`loss_given_assignment` at the assignment
    computed here.  Zero sub-gradient where the margin clips the distance
    or where a feature coincides with a prototype.
    """
    zt = as_tensor3(z, "z")
    d, h, w = zt.shape
    if d != bank.d:
        raise ShapeError(f"feature dim {d} != bank dim {bank.d}")
    n = h * w
    flat = zt.reshape(d, n).T.astype(np.float64)
    protos = bank.protos.astype(np.float64)

    dist = _dists(flat, protos)
    pos_mask = pos_neg_masks(dist, cfg.n_pos)
    loss_rows, s, s_pos, s_all = _softmax_terms(dist, pos_mask, cfg)
    loss = float(loss_rows.mean())

    # d(loss)/d(logit), then chain through the margin and the distance
    dl_dlogit = s / s_all[:, None] - pos_mask * (s / s_pos[:, None])
    active = dist > cfg.r
    coeff = dl_dlogit * np.where(active, -1.0 / cfg.tau, 0.0) / n  # (n, K)

    diff = flat[:, None, :] - protos[None, :, :]  # (n, K, D)
    safe = np.where(dist > 0.0, dist, 1.0)
    unit = diff / safe[:, :, None]
    unit[dist == 0.0] = 0.0

    grad_flat = np.einsum("nk,nkd->nd", coeff, unit)
    grad_p = -np.einsum("nk,nkd->kd", coeff, unit)

    if not (np.isfinite(loss) and np.isfinite(grad_flat).all()
            and np.isfinite(grad_p).all()):
        bad = np.argwhere(~np.isfinite(grad_flat))
        pos = divmod(int(bad[0][0]), w) if bad.size else (0, 0)
        raise NumericalError(f"non-finite loss term near position {pos}")

    grad_z = grad_flat.T.reshape(d, h, w).astype(np.float32)
    return loss, grad_z, grad_p.astype(np.float32)


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              step: int, hyper: AdamHyper) -> int:
    """One bias-corrected Adam update, in place; returns the new step count.

    Weight decay is decoupled (applied to the parameter before the moment
    update, never folded into the gradient) and only when the caller's hyper
    sets it above zero.
    """
    if param.shape != grad.shape or param.shape != m.shape or param.shape != v.shape:
        raise ShapeError("param/grad/moment shapes must match")
    t = step + 1
    g = np.asarray(grad, dtype=param.dtype)
    if hyper.weight_decay > 0:
        param *= 1.0 - hyper.lr * hyper.weight_decay
    m *= hyper.beta1
    m += (1.0 - hyper.beta1) * g
    v *= hyper.beta2
    v += (1.0 - hyper.beta2) * np.square(g)
    m_hat = m / (1.0 - hyper.beta1**t)
    v_hat = v / (1.0 - hyper.beta2**t)
    param -= (hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)).astype(param.dtype)
    return t
