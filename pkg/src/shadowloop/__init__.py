"""Cast and attached shadow analysis from surface normals and a directional light."""

from .evaluation import ConfusionCounts, MetricsReport, confusion, evaluate_bundle
from .geometry import normals_from_depth, partial_attached_map, soft_partial_attached_map
from .light import (
    LightFitConfig,
    LightFitResult,
    angular_error,
    centroid_direction_2d,
    fit_light_from_attached,
    heuristic_light_3d,
)
from .objectives import LossBreakdown, LossWeights, total_loss
from .oracle import SceneSpec, Sphere, render_scene, scene_suite
from .pipeline import BaselineDetector, DetectorConfig, logits_to_mask, refine_loop
from .raster import DataError, TriClassMask

__version__ = "0.1.0"
