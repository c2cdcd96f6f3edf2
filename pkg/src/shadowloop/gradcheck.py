"""Finite-difference verification of the analytic loss gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import objectives as obj
from .raster import TriClassMask

KINK_GAP = 1e-3


@dataclass(frozen=True)
class GradCheck:
    instance: int
    loss: str
    rel_error: float

    def passed(self, tol: float) -> bool:
        return self.rel_error <= tol


def random_instance(rng: np.random.Generator, size: int = 6, margin: float = 0.2):
    """Logits, labels, soft map and light pair kept away from hinge and L1 kinks."""
    logits = rng.normal(0.0, 2.0, (size, size, 3))
    d = logits[..., 1] - logits[..., 2]
    for kink in (margin, -margin):
        near = np.abs(d - kink) < KINK_GAP
        logits[..., 1][near] += 10 * KINK_GAP
        d = logits[..., 1] - logits[..., 2]

    labels = rng.integers(0, 3, (size, size)).astype(np.uint8)
    undefined = (rng.random((size, size)) < 0.1) & (labels == 0)
    y_type = TriClassMask(labels, undefined)

    soft = rng.uniform(0.05, 0.95, (size, size))
    l_star = rng.normal(size=3)
    l_star /= np.linalg.norm(l_star)
    l_hat = rng.normal(size=3)
    close = np.abs(l_hat - l_star) < KINK_GAP
    l_hat[close] += 10 * KINK_GAP
    return logits, y_type, soft, l_hat, l_star


def check_instance(index, rng, weights=obj.LossWeights(), step=1e-5) -> list[GradCheck]:
    logits, y_type, soft, l_hat, l_star = random_instance(rng, margin=weights.margin)
    y_union = y_type.union
    y_att = y_type.attached
    out = []

    _, g = obj.seg_loss_grad(logits, y_union, weights)
    num = obj.numeric_gradient(lambda z: obj.seg_loss(z, y_union, weights), logits, step)
    out.append(GradCheck(index, "seg", obj.relative_error(g, num)))

    _, g_ce, g_dist = obj.type_loss_grad(logits, y_type, weights)
    num = obj.numeric_gradient(lambda z: obj.type_loss(z, y_type, weights)[0], logits, step)
    out.append(GradCheck(index, "ce", obj.relative_error(g_ce, num)))
    num = obj.numeric_gradient(lambda z: obj.type_loss(z, y_type, weights)[1], logits, step)
    out.append(GradCheck(index, "dist", obj.relative_error(g_dist, num)))

    _, g_att, g_dir, g_unit = obj.light_loss_grad(soft, y_att, l_hat, l_star, weights)
    num = obj.numeric_gradient(lambda p: obj.light_loss(p, y_att, l_hat, l_star, weights).att, soft, step)
    out.append(GradCheck(index, "att", obj.relative_error(g_att, num)))
    num = obj.numeric_gradient(lambda v: obj.light_loss(soft, y_att, v, l_star, weights).dir, l_hat, step)
    out.append(GradCheck(index, "dir", obj.relative_error(g_dir, num)))
    num = obj.numeric_gradient(lambda v: obj.light_loss(soft, y_att, v, l_star, weights).unit, l_hat, step)
    out.append(GradCheck(index, "unit", obj.relative_error(g_unit, num)))
    return out


def run_gradient_checks(seed: int = 0, instances: int = 100, step: float = 1e-5) -> list[GradCheck]:
    rng = np.random.default_rng(seed)
    results = []
    for i in range(instances):
        results.extend(check_instance(i, rng, step=step))
    return results
