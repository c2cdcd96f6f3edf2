"""Shadow and light training objectives with analytic gradients.

Logit fields have shape (H, W, 3) ordered (z_bg, z_cast, z_att).

Shadow side:
    s          = LSE(z_cast, z_att) - z_bg
    L_seg      = BCE_logits(s, y_union) + lambda_dice * Dice(sigmoid(s), y_union)
    L_type     = CE(z, y_type) + lambda_dist * L_dist
    L_dist     = mean_{cast} max(0, m - d) + mean_{att} max(0, m + d),  d = z_cast - z_att
    L_shadow   = L_seg + L_type

Light side:
    L_att      = weighted BCE(soft attached map, y_att)
    L_dir      = |l_hat - l_star|_1
    L_unit     = (|l_hat|_2 - 1)^2
    L_light    = lambda_att * L_att + lambda_dir * L_dir + lambda_unit * L_unit

L_total = L_shadow + L_light.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .raster import ATTACHED, CAST, DataError, TriClassMask, check_grid

PROB_CLAMP = 1e-7
DICE_SMOOTH = 1.0


@dataclass(frozen=True)
class LossWeights:
    dice: float = 0.1
    dist: float = 0.2
    att: float = 0.4
    dir: float = 0.5
    unit: float = 0.1
    margin: float = 0.2
    positive_weight_cap: float = 20.0

    def __post_init__(self):
        for name in ("dice", "dist", "att", "dir", "unit", "margin"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} weight must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    seg: float
    ce: float
    dist: float
    type: float  # ce + lambda_dist * dist
    att: float
    dir: float
    unit: float
    shadow: float
    light: float
    total: float


class LightLoss(NamedTuple):
    att: float
    dir: float
    unit: float
    degenerate: bool


def _check_logits(logits) -> np.ndarray:
    logits = check_grid(logits, 3, "logits").astype(np.float64, copy=False)
    if not np.all(np.isfinite(logits)):
        raise DataError("logits must be finite")
    return logits


def _check_target(target, shape, name):
    target = np.asarray(target)
    if target.shape != shape:
        raise DataError(f"dimension mismatch: {name} {target.shape} vs {shape}")
    return target.astype(np.float64)


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def union_logit(logits) -> np.ndarray:
    """Shadow-vs-background logit s = log(e^z_cast + e^z_att) - z_bg."""
    z = _check_logits(logits)
    return np.logaddexp(z[..., 1], z[..., 2]) - z[..., 0]


# -- L_seg ------------------------------------------------------------------


def _bce_with_logits(s, y):
    return np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))


def _dice(p, y):
    return 1.0 - (2.0 * np.sum(p * y) + DICE_SMOOTH) / (np.sum(p) + np.sum(y) + DICE_SMOOTH)


def seg_loss(logits, y_union, weights: LossWeights = LossWeights()) -> float:
    s = union_logit(logits)
    y = _check_target(y_union, s.shape, "y_union")
    return float(np.mean(_bce_with_logits(s, y)) + weights.dice * _dice(_sigmoid(s), y))


def seg_loss_grad(logits, y_union, weights: LossWeights = LossWeights()):
    """(L_seg, dL_seg/dlogits)."""
    z = _check_logits(logits)
    s = union_logit(z)
    y = _check_target(y_union, s.shape, "y_union")
    p = _sigmoid(s)
    n = s.size

    inter = 2.0 * np.sum(p * y) + DICE_SMOOTH
    denom = np.sum(p) + np.sum(y) + DICE_SMOOTH
    value = float(np.mean(_bce_with_logits(s, y)) + weights.dice * (1.0 - inter / denom))

    d_dice_dp = -(2.0 * y * denom - inter) / denom**2
    ds = (p - y) / n + weights.dice * d_dice_dp * p * (1.0 - p)

    # ds/dz: (-1, softmax_cast, softmax_att) over the cast/att pair
    w_cast = _sigmoid(z[..., 1] - z[..., 2])
    grad = np.stack([-ds, ds * w_cast, ds * (1.0 - w_cast)], axis=-1)
    return value, grad


# -- L_type -----------------------------------------------------------------


def _type_sets(y_type: TriClassMask, shape):
    if not isinstance(y_type, TriClassMask):
        raise TypeError("y_type must be a TriClassMask")
    if y_type.shape != shape:
        raise DataError(f"dimension mismatch: labels {y_type.shape} vs logits {shape}")
    valid = ~y_type.undefined
    return valid, y_type.labels == CAST, y_type.labels == ATTACHED


def hinge_terms(d, cast, att, margin):
    """Per-set hinge means; an empty set contributes 0."""
    cast_term = np.maximum(0.0, margin - d[cast]).mean() if cast.any() else 0.0
    att_term = np.maximum(0.0, margin + d[att]).mean() if att.any() else 0.0
    return float(cast_term), float(att_term)


def type_loss(logits, y_type: TriClassMask, weights: LossWeights = LossWeights()):
    """(ce, dist): softmax cross-entropy and the cast/attached margin term.

    Undefined pixels are excluded from both. The caller combines them as
    ce + weights.dist * dist.
    """
    z = _check_logits(logits)
    valid, cast, att = _type_sets(y_type, z.shape[:2])
    if valid.any():
        zv = z[valid]
        log_norm = np.logaddexp.reduce(zv, axis=-1)
        picked = np.take_along_axis(zv, y_type.labels[valid][:, None].astype(np.intp), axis=-1)[:, 0]
        ce = float(np.mean(log_norm - picked))
    else:
        ce = 0.0
    d = z[..., 1] - z[..., 2]
    return ce, sum(hinge_terms(d, cast, att, weights.margin))


def type_loss_grad(logits, y_type: TriClassMask, weights: LossWeights = LossWeights()):
    """((ce, dist), dce/dlogits, ddist/dlogits)."""
    z = _check_logits(logits)
    valid, cast, att = _type_sets(y_type, z.shape[:2])
    ce, dist = type_loss(z, y_type, weights)

    d_ce = np.zeros_like(z)
    n_valid = int(valid.sum())
    if n_valid:
        zv = z[valid]
        prob = np.exp(zv - np.logaddexp.reduce(zv, axis=-1, keepdims=True))
        prob[np.arange(n_valid), y_type.labels[valid]] -= 1.0
        d_ce[valid] = prob / n_valid

    d = z[..., 1] - z[..., 2]
    dd = np.zeros(d.shape)
    if cast.any():
        dd[cast] -= (weights.margin - d[cast] > 0) / cast.sum()
    if att.any():
        dd[att] += (weights.margin + d[att] > 0) / att.sum()
    d_dist = np.zeros_like(z)
    d_dist[..., 1] = dd
    d_dist[..., 2] = -dd
    return (ce, dist), d_ce, d_dist


# -- L_light ----------------------------------------------------------------


def positive_weight(n_pos: int, n_neg: int, cap: float) -> float:
    """Inverse-frequency weight for the positive class, clamped to ``cap``."""
    if n_pos == 0:
        return float(cap)
    return float(min(n_neg / n_pos, cap))


def weighted_bce(prob, target, pos_weight: float) -> float:
    p = np.clip(np.asarray(prob, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(target, dtype=np.float64)
    return float(np.mean(-(pos_weight * y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def _att_weight(y, cap):
    n_pos = int(np.count_nonzero(y))
    return positive_weight(n_pos, y.size - n_pos, cap), n_pos == 0


def light_loss(soft_map, y_att, l_hat, l_star, weights: LossWeights = LossWeights()) -> LightLoss:
    soft_map = check_grid(soft_map, 1, "soft map").astype(np.float64)
    y = _check_target(y_att, soft_map.shape, "y_att")
    w, degenerate = _att_weight(y, weights.positive_weight_cap)
    l_hat = np.asarray(l_hat, dtype=np.float64)
    l_star = np.asarray(l_star, dtype=np.float64)
    return LightLoss(
        att=weighted_bce(soft_map, y, w),
        dir=float(np.sum(np.abs(l_hat - l_star))),
        unit=float((np.linalg.norm(l_hat) - 1.0) ** 2),
        degenerate=degenerate,
    )


def light_loss_grad(soft_map, y_att, l_hat, l_star, weights: LossWeights = LossWeights()):
    """(LightLoss, datt/dsoft_map, ddir/dl_hat, dunit/dl_hat).

    The attached gradient is zero where the clamp is active; the L1 gradient
    takes sign(0) = 0 at kinks.
    """
    loss = light_loss(soft_map, y_att, l_hat, l_star, weights)
    p = np.asarray(soft_map, dtype=np.float64)
    y = np.asarray(y_att, dtype=np.float64)
    w, _ = _att_weight(y, weights.positive_weight_cap)
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    d_att = np.where(inside, -(w * y / pc - (1.0 - y) / (1.0 - pc)) / p.size, 0.0)

    l_hat = np.asarray(l_hat, dtype=np.float64)
    norm = np.linalg.norm(l_hat)
    d_dir = np.sign(l_hat - np.asarray(l_star, dtype=np.float64))
    d_unit = 2.0 * (norm - 1.0) * l_hat / norm if norm > 0 else np.zeros(3)
    return loss, d_att, d_dir, d_unit


# -- totals -----------------------------------------------------------------


def combine(seg, ce, dist, att, dir, unit, weights: LossWeights = LossWeights()) -> LossBreakdown:
    type_ = ce + weights.dist * dist
    shadow = seg + type_
    light = weights.att * att + weights.dir * dir + weights.unit * unit
    return LossBreakdown(
        seg=seg, ce=ce, dist=dist, type=type_, att=att, dir=dir, unit=unit,
        shadow=shadow, light=light, total=shadow + light,
    )


def total_loss(
    logits, y_type: TriClassMask, soft_map, l_hat, l_star, weights: LossWeights = LossWeights()
) -> LossBreakdown:
    seg = seg_loss(logits, y_type.union, weights)
    ce, dist = type_loss(logits, y_type, weights)
    light = light_loss(soft_map, y_type.attached, l_hat, l_star, weights)
    return combine(seg, ce, dist, light.att, light.dir, light.unit, weights)


# -- finite differences -----------------------------------------------------


def numeric_gradient(f: Callable[[np.ndarray], float], x, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f(x)
        flat[i] = orig - step
        f_minus = f(x)
        flat[i] = orig
        g[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0.0 else float(np.linalg.norm(a - b) / scale)
