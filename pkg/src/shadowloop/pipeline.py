"""Detector interface, a non-learned baseline detector, and the closed loop
that alternates shadow detection with light fitting.

A detector is any callable ``(image, normals, prior) -> logits`` where
``prior`` is an (H, W) attached-shadow probability map and the logits are
(H, W, 3) ordered (bg, cast, attached).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .geometry import DEFAULT_STEEPNESS, partial_attached_map, soft_partial_attached_map
from .light import LightFitConfig, NoEvidenceError, fit_light_from_attached
from .raster import (
    ATTACHED,
    BACKGROUND,
    DataError,
    TriClassMask,
    check_grid,
    check_normals,
    check_same_shape,
)

log = logging.getLogger(__name__)

Detector = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DetectorConfig:
    """Scoring constants of :class:`BaselineDetector`."""

    intensity_threshold: float = 0.25
    prior_gain: float = 0.5
    min_region: int = 20
    sharpness: float = 20.0  # logit units per unit of luminance
    flat_bias: float = 2.0
    flat_scale: float = 1e-4  # squared normal change per pixel
    prior_clamp: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.intensity_threshold < 1.0:
            raise ValueError("intensity_threshold must be in (0, 1)")
        if not 0.0 < self.prior_clamp < 0.5:
            raise ValueError("prior_clamp must be in (0, 0.5)")


def normal_curvature(normals: np.ndarray) -> np.ndarray:
    """Mean squared change of the normal to the 4-neighbours (edges replicated)."""
    padded = np.pad(normals, ((1, 1), (1, 1), (0, 0)), mode="edge")
    core = padded[1:-1, 1:-1]
    total = np.zeros(normals.shape[:2])
    for dy, dx in ((0, 1), (2, 1), (1, 0), (1, 2)):
        nb = padded[dy : dy + normals.shape[0], dx : dx + normals.shape[1]]
        total += np.sum((core - nb) ** 2, axis=-1)
    return total / 4.0


def flatness(normals: np.ndarray, scale: float) -> np.ndarray:
    """1 on planar regions, decaying toward 0 with local normal change."""
    return np.exp(-normal_curvature(normals) / scale)


class BaselineDetector:
    """Hand-set stand-in for a learned cast/attached detector.

    Scores, per pixel, with L the channel-mean luminance:

        e     = sharpness * (intensity_threshold - L)        darkness evidence
        t     = flat_bias * (2 * flatness - 1)               +: planar, -: curved
        P     = prior_gain * logit(clip(prior, c, 1 - c))
        z_bg  = 0
        z_cast = e + t - flat_bias
        z_att  = e - t - flat_bias + P

    so dark planar pixels lean cast, dark curved pixels lean attached, and the
    prior shifts the shadow/background boundary only on curved surfaces.
    Non-background connected components smaller than ``min_region`` pixels are
    pushed to background.
    """

    def __init__(self, config: DetectorConfig = DetectorConfig()):
        self.config = config

    def __call__(self, image, normals, prior) -> np.ndarray:
        cfg = self.config
        image = check_grid(image, 3, "image").astype(np.float64)
        normals = check_normals(normals)
        prior = check_grid(prior, 1, "prior").astype(np.float64)
        check_same_shape(image, normals, prior)
        if prior.min() < 0.0 or prior.max() > 1.0:
            raise DataError("prior must lie in [0, 1]")

        lum = image.mean(axis=-1)
        e = cfg.sharpness * (cfg.intensity_threshold - lum)
        t = cfg.flat_bias * (2.0 * flatness(normals, cfg.flat_scale) - 1.0)
        q = np.clip(prior, cfg.prior_clamp, 1.0 - cfg.prior_clamp)
        p_term = cfg.prior_gain * np.log(q / (1.0 - q))

        logits = np.empty(lum.shape + (3,))
        logits[..., 0] = 0.0
        logits[..., 1] = e + t - cfg.flat_bias
        logits[..., 2] = e - t - cfg.flat_bias + p_term

        if cfg.min_region > 1:
            shadow = np.argmax(logits, axis=-1) != BACKGROUND
            comp, n = ndimage.label(shadow)
            if n:
                sizes = np.bincount(comp.ravel())
                small = (sizes < cfg.min_region)[comp] & shadow
                logits[small, 0] = logits[small, 1:].max(axis=-1) + 1.0
        return logits


def baseline_detect(image, normals, prior, config: DetectorConfig = DetectorConfig()):
    return BaselineDetector(config)(image, normals, prior)


def logits_to_mask(logits) -> TriClassMask:
    """Per-pixel argmax; ties resolve to the lower class index (bg < cast < att)."""
    logits = check_grid(logits, 3, "logits")
    labels = np.argmax(logits, axis=-1).astype(np.uint8)
    return TriClassMask(labels, np.zeros(labels.shape, dtype=bool))


# -- closed loop ------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    prior: np.ndarray
    logits: np.ndarray
    mask: TriClassMask
    light: np.ndarray | None  # None when the fit had no evidence
    partial_map: np.ndarray | None
    fit_residual: float | None = None
    note: str = ""


@dataclass(frozen=True)
class RefinementTrace:
    records: tuple[IterationRecord, ...] = field(default_factory=tuple)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def light(self) -> np.ndarray | None:
        """Most recent successfully fitted light."""
        for rec in reversed(self.records):
            if rec.light is not None:
                return rec.light
        return None


@dataclass(frozen=True)
class RegionConfig:
    dilation: int = 2
    flat_scale: float = 1e-4


def fit_region(mask: TriClassMask, normals, config: RegionConfig = RegionConfig()) -> np.ndarray:
    """Pixels used for the light fit: predicted shadow dilated by a few pixels,
    restricted to curved (non-planar) surface."""
    shadow = mask.labels != BACKGROUND
    if config.dilation > 0 and shadow.any():
        shadow = ndimage.binary_dilation(shadow, iterations=config.dilation)
    curved = normal_curvature(normals) > config.flat_scale * math.log(2.0)
    return shadow & curved


def refine_loop(
    image,
    normals,
    detector: Detector | None = None,
    iterations: int = 3,
    light_cfg: LightFitConfig = LightFitConfig(),
    region_cfg: RegionConfig = RegionConfig(),
    prior_steepness: float = DEFAULT_STEEPNESS,
) -> RefinementTrace:
    """Alternate detection and light fitting for ``iterations`` passes.

    Pass 1 sees an all-ones prior. After each detection the light is fitted to
    the predicted attached pixels and its soft attached map becomes the next
    prior. When a pass predicts no attached shadow the previous prior is kept.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    detector = detector or BaselineDetector()
    normals = check_normals(normals)
    prior = np.ones(normals.shape[:2])
    records = []
    for it in range(iterations):
        logits = detector(image, normals, prior)
        mask = logits_to_mask(logits)
        region = fit_region(mask, normals, region_cfg)
        attached = (mask.labels == ATTACHED) & region
        try:
            if not attached.any():
                raise NoEvidenceError("no attached-shadow pixels predicted")
            fit = fit_light_from_attached(normals, attached, region, light_cfg)
        except NoEvidenceError:
            log.info("iteration %d: no attached evidence, keeping previous prior", it + 1)
            records.append(IterationRecord(prior, logits, mask, None, None, None, "no attached evidence"))
            continue
        light = fit.direction
        records.append(
            IterationRecord(prior, logits, mask, light, partial_attached_map(normals, light), fit.residual)
        )
        prior = soft_partial_attached_map(normals, light, prior_steepness)
    return RefinementTrace(tuple(records))
