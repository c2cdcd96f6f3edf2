"""Light direction estimation from shadow evidence.

Two routes:

* a heuristic from the object and cast-shadow regions: the image-plane
  direction joins the object centroid to the shadow centroid, and the depth
  component's sign comes from whether the shadow lies deeper than the object;
* a numerical fit of the direction whose orientation-only attached map best
  explains an observed attached-shadow mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objectives import PROB_CLAMP, positive_weight
from .raster import DataError, as_light, check_mask, check_normals, check_same_shape

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class NoEvidenceError(DataError):
    """The attached-shadow mask has no positive pixels inside the region."""


@dataclass(frozen=True)
class LightFitConfig:
    coarse_samples: int = 1000
    refine_steps: int = 20
    # sharper than the prior map: a soft terminator biases the fit near the rim
    steepness: float = 200.0
    positive_weight_cap: float = 20.0

    def __post_init__(self):
        if self.coarse_samples < 16:
            raise ValueError("coarse_samples must be >= 16")
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be >= 0")
        if not self.steepness > 0:
            raise ValueError("steepness must be positive")
        if not self.positive_weight_cap > 0:
            raise ValueError("positive_weight_cap must be positive")


@dataclass(frozen=True)
class LightFitResult:
    direction: np.ndarray
    residual: float
    candidates_evaluated: int
    # no negative pixels in the region: the positive weight fell back to 1
    degenerate: bool = False


@dataclass(frozen=True)
class HeuristicConfig:
    depth_scale: float = 1.0
    equal_depth_band: float = 1e-3  # fraction of the depth range
    min_centroid_distance: float = 0.5


def angular_error(a, b) -> float:
    """Angle between two unit directions, in degrees."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return math.degrees(math.acos(min(1.0, max(-1.0, float(a @ b)))))


# -- centroid heuristic -----------------------------------------------------


def _centroid(mask: np.ndarray) -> np.ndarray:
    rows, cols = np.nonzero(mask)
    return np.array([cols.mean(), rows.mean()])


def _displacement(object_mask, cast_mask, min_distance):
    object_mask = check_mask(object_mask, "object mask")
    cast_mask = check_mask(cast_mask, "cast mask")
    check_same_shape(object_mask, cast_mask)
    if not object_mask.any():
        raise DataError("object mask is empty")
    if not cast_mask.any():
        raise DataError("cast mask is empty")
    disp = _centroid(cast_mask) - _centroid(object_mask)
    if np.hypot(*disp) < min_distance:
        raise DataError("object and shadow centroids coincide")
    return disp


def centroid_direction_2d(object_mask, cast_mask, min_distance: float = 0.5) -> np.ndarray:
    """Unit image-plane vector (x right, y down) from object to shadow centroid."""
    disp = _displacement(object_mask, cast_mask, min_distance)
    return disp / np.hypot(*disp)


def heuristic_light_3d(object_mask, cast_mask, depth, config: HeuristicConfig = HeuristicConfig()):
    """3-D light from the centroid direction plus a signed depth component.

    The depth component is positive (into the scene) when the shadow's median
    depth exceeds the object's and negative otherwise. Its magnitude is the
    median depth gap per pixel of centroid displacement, divided by
    ``config.depth_scale``.
    """
    disp = _displacement(object_mask, cast_mask, config.min_centroid_distance)
    depth = np.asarray(depth, dtype=np.float64)
    check_same_shape(depth, object_mask)
    object_mask = np.asarray(object_mask, dtype=bool)
    cast_mask = np.asarray(cast_mask, dtype=bool)

    gap = float(np.median(depth[cast_mask]) - np.median(depth[object_mask]))
    band = config.equal_depth_band * float(depth.max() - depth.min())
    dist = float(np.hypot(*disp))
    z = 0.0 if abs(gap) <= band else gap / (dist * config.depth_scale)
    return as_light([disp[0] / dist, disp[1] / dist, z])


# -- fit to an attached mask ------------------------------------------------


def fibonacci_lattice(n: int) -> np.ndarray:
    """``n`` near-uniform unit vectors, shape (n, 3), in a fixed order."""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(1.0 - z * z)
    phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


class _Objective:
    """Mean weighted BCE of sigmoid(k n.l) against the mask over the region."""

    def __init__(self, normals, labels, steepness, pos_weight):
        self.pos = normals[labels]
        self.neg = normals[~labels]
        self.count = len(labels)
        self.k = steepness
        self.w = pos_weight
        self.calls = 0
        self._lo = math.log(PROB_CLAMP)
        self._hi = math.log1p(-PROB_CLAMP)

    def _log_sigmoid(self, x):
        # log sigmoid(x) with the probability clamped to [eps, 1 - eps]
        out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
        return np.clip(out, self._lo, self._hi, out=out)

    def __call__(self, dirs: np.ndarray, chunk: int = 128) -> np.ndarray:
        dirs = np.atleast_2d(dirs)
        self.calls += len(dirs)
        out = np.empty(len(dirs))
        for start in range(0, len(dirs), chunk):
            d = dirs[start : start + chunk].T
            pos = -self._log_sigmoid(self.k * (self.pos @ d)).sum(axis=0)
            neg = -self._log_sigmoid(-self.k * (self.neg @ d)).sum(axis=0)
            out[start : start + chunk] = (self.w * pos + neg) / self.count
        return out


def _local_frame(center: np.ndarray):
    """Orthonormal (center, e1, e2) basis used for spherical refinement."""
    helper = np.eye(3)[int(np.argmin(np.abs(center)))]
    e1 = np.cross(center, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(center, e1)
    return center, e1, e2


def _golden_section(f, lo, hi, evals):
    """Minimize scalar ``f`` on [lo, hi]; returns (x, f(x))."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max(evals - 2, 0)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def fit_light_from_attached(
    normals, attached_mask, region, config: LightFitConfig = LightFitConfig(), line_evals: int = 12
) -> LightFitResult:
    """Direction whose soft attached map best matches ``attached_mask`` on ``region``.

    A Fibonacci lattice of ``config.coarse_samples`` directions is scanned
    (ties go to the lowest lattice index), then ``config.refine_steps`` rounds
    of golden-section searches over the two angles of a spherical frame
    centred on the incumbent, each round shrinking the search window.
    """
    normals = check_normals(normals)
    attached_mask = check_mask(attached_mask, "attached mask")
    region = check_mask(region, "region")
    check_same_shape(normals, attached_mask, region)
    if not region.any():
        raise DataError("fit region is empty")
    if np.any(attached_mask & ~region):
        raise DataError("attached mask must lie inside the region")

    labels = attached_mask[region]
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoEvidenceError("no attached-shadow pixels in the region")
    n_neg = labels.size - n_pos
    degenerate = n_neg == 0
    weight = 1.0 if degenerate else positive_weight(n_pos, n_neg, config.positive_weight_cap)
    objective = _Objective(normals[region], labels, config.steepness, weight)

    lattice = fibonacci_lattice(config.coarse_samples)
    scores = objective(lattice)
    best_idx = int(np.argmin(scores))  # first minimizer on ties
    best = lattice[best_idx]
    best_score = float(scores[best_idx])

    if config.refine_steps > 0:
        c, e1, e2 = _local_frame(best)

        def direction(theta, phi):
            return math.sin(theta) * (math.cos(phi) * c + math.sin(phi) * e1) + math.cos(theta) * e2

        theta, phi = math.pi / 2, 0.0
        window = 2.0 * math.sqrt(4.0 * math.pi / config.coarse_samples)
        for _ in range(config.refine_steps):
            t, ft = _golden_section(
                lambda t: float(objective(direction(t, phi))[0]), theta - window, theta + window, line_evals
            )
            if ft < best_score:
                theta, best_score = t, ft
            p, fp = _golden_section(
                lambda p: float(objective(direction(theta, p))[0]), phi - window, phi + window, line_evals
            )
            if fp < best_score:
                phi, best_score = p, fp
            window *= GOLDEN
        best = direction(theta, phi)

    return LightFitResult(
        direction=as_light(best),
        residual=max(best_score, 0.0),
        candidates_evaluated=objective.calls,
        degenerate=degenerate,
    )
