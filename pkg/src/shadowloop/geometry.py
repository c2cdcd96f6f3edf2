"""Surface normals from depth and the orientation-only attached shadow map."""

from __future__ import annotations

import numpy as np

from .raster import DataError, as_light, check_grid, check_normals

DEFAULT_STEEPNESS = 25.0


def normals_from_depth(depth: np.ndarray, step: int = 1) -> np.ndarray:
    """Unit normals of the surface z = depth(x, y), facing the camera.

    Depth is treated orthographically in pixel units. Gradients use central
    differences over ``step`` pixels; the outer ``step``-pixel border copies the
    nearest interior gradient. Silhouette pixels (depth jumps) get meaningless
    normals since no discontinuity handling is attempted.
    """
    depth = check_grid(depth, 1, "depth").astype(np.float64)
    if step < 1:
        raise DataError("step must be >= 1")
    h, w = depth.shape
    if h < 2 * step + 1 or w < 2 * step + 1:
        raise DataError(f"depth {depth.shape} is too small for a step-{step} stencil")

    gx = np.empty_like(depth)
    gy = np.empty_like(depth)
    gx[:, step:-step] = (depth[:, 2 * step :] - depth[:, : -2 * step]) / (2 * step)
    gy[step:-step, :] = (depth[2 * step :, :] - depth[: -2 * step, :]) / (2 * step)
    gx[:, :step] = gx[:, step : step + 1]
    gx[:, -step:] = gx[:, -step - 1 : -step]
    gy[:step, :] = gy[step : step + 1, :]
    gy[-step:, :] = gy[-step - 1 : -step, :]

    # tangents (1, 0, gx) and (0, 1, gy); their cross product flipped toward -z
    n = np.stack([gx, gy, -np.ones_like(depth)], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def facing_dot(normals: np.ndarray, light) -> np.ndarray:
    """Per-pixel n . l."""
    normals = check_normals(normals)
    light = as_light(light, tol=1e-6)
    return normals @ light


def partial_attached_map(normals: np.ndarray, light) -> np.ndarray:
    """Pixels whose surface faces away from the light (n . l > 0).

    Visibility is ignored: a surface facing the light but blocked by other
    geometry is not marked.
    """
    return facing_dot(normals, light) > 0.0


def soft_partial_attached_map(
    normals: np.ndarray, light, steepness: float = DEFAULT_STEEPNESS
) -> np.ndarray:
    """sigmoid(steepness * n . l), exactly 0.5 on the terminator."""
    if not steepness > 0:
        raise DataError(f"steepness must be positive, got {steepness}")
    return sigmoid(steepness * facing_dot(normals, light))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
