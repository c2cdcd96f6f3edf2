"""Analytic sphere-on-plane scenes with exact shadow labels.

The camera is orthographic and looks along +z; pixel (row, col) is the ray
x = col, y = row. Spheres sit in front of a fronto-parallel backdrop plane at
z = plane_depth. All lengths, including depth, are in pixel units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import DataError, TriClassMask, as_light

RAY_EPS = 1e-6


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float


@dataclass(frozen=True)
class SceneSpec:
    spheres: tuple[Sphere, ...]
    plane_depth: float
    light: tuple[float, float, float]
    resolution: tuple[int, int]  # (W, H)
    ambient: float = 0.15
    albedo: float = 0.8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "spheres", tuple(self.spheres))
        object.__setattr__(self, "light", tuple(float(c) for c in as_light(self.light)))
        w, h = self.resolution
        if w < 1 or h < 1:
            raise DataError(f"degenerate resolution {self.resolution}")
        for s in self.spheres:
            if s.radius <= 0:
                raise DataError(f"sphere radius must be positive: {s}")
            if s.center[2] + s.radius > self.plane_depth:
                raise DataError(f"sphere {s} pokes through the plane at z={self.plane_depth}")


@dataclass(frozen=True)
class LabelBundle:
    image: np.ndarray
    normals: np.ndarray
    depth: np.ndarray
    gt: TriClassMask
    object_mask: np.ndarray
    light: np.ndarray
    # same scene rendered with visibility ignored (no cast / blocked shading)
    shadow_free: np.ndarray = field(repr=False)
    # sphere index per pixel, -1 on the plane
    sphere_id: np.ndarray = field(repr=False)


def _ray_hits(points, direction, center, radius):
    """For rays points + t*direction (unit direction), whether some t > RAY_EPS
    lies on or inside the sphere. Tangent rays count as hits."""
    oc = points - np.asarray(center, dtype=np.float64)
    b = oc @ direction
    c = np.einsum("...i,...i->...", oc, oc) - radius * radius
    disc = b * b - c
    far_root = -b + np.sqrt(np.maximum(disc, 0.0))
    return (disc >= 0.0) & (far_root > RAY_EPS)


def raycast_blocked(point, light, spheres) -> bool:
    """True iff the ray from ``point`` toward the light meets any sphere."""
    point = np.asarray(point, dtype=np.float64)
    toward_light = -as_light(light)
    return any(bool(_ray_hits(point, toward_light, s.center, s.radius)) for s in spheres)


def render_scene(spec: SceneSpec) -> LabelBundle:
    w, h = spec.resolution
    light = np.asarray(spec.light)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    depth = np.full((h, w), float(spec.plane_depth))
    sphere_id = np.full((h, w), -1, dtype=np.int64)
    normals = np.zeros((h, w, 3))
    normals[..., 2] = -1.0

    for idx, s in enumerate(spec.spheres):
        cx, cy, cz = s.center
        rho2 = (xs - cx) ** 2 + (ys - cy) ** 2
        inside = rho2 < s.radius**2
        z = cz - np.sqrt(np.where(inside, s.radius**2 - rho2, 0.0))
        front = inside & (z < depth)
        depth[front] = z[front]
        sphere_id[front] = idx
        normals[front, 0] = (xs[front] - cx) / s.radius
        normals[front, 1] = (ys[front] - cy) / s.radius
        normals[front, 2] = (z[front] - cz) / s.radius
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)

    points = np.stack([xs, ys, depth], axis=-1)
    object_mask = sphere_id >= 0
    dot = normals @ light

    # a convex sphere only shadows itself where it faces away, already covered
    # by dot > 0, so each point is tested against the other spheres only
    blocked = np.zeros((h, w), dtype=bool)
    toward_light = -light
    for idx, s in enumerate(spec.spheres):
        test = sphere_id != idx
        blocked[test] |= _ray_hits(points[test], toward_light, s.center, s.radius)

    attached = object_mask & ((dot > 0.0) | blocked)
    cast = ~object_mask & blocked

    lambert = spec.albedo * np.maximum(0.0, -dot)
    shadow_free = np.minimum(lambert + spec.ambient, 1.0)
    shade = np.where(blocked, spec.ambient, shadow_free)
    image = np.repeat(np.minimum(shade, 1.0)[..., None], 3, axis=-1)

    return LabelBundle(
        image=image,
        normals=normals,
        depth=depth,
        gt=TriClassMask.from_masks(cast, attached),
        object_mask=object_mask,
        light=light.copy(),
        shadow_free=np.repeat(shadow_free[..., None], 3, axis=-1),
        sphere_id=sphere_id,
    )


def _random_light(rng: np.random.Generator, backlit: bool) -> np.ndarray:
    z = rng.uniform(-0.9, -0.1) if backlit else rng.uniform(0.1, 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    r = np.sqrt(1.0 - z * z)
    return np.array([r * np.cos(phi), r * np.sin(phi), z])


def _random_spheres(rng, count, w, h, plane_depth):
    spheres = []
    for _ in range(100 * count):
        if len(spheres) == count:
            break
        r = rng.uniform(0.10, 0.25) * w
        cx = rng.uniform(r, w - r)
        cy = rng.uniform(r, h - r)
        cz = plane_depth - r - rng.uniform(0.0, 0.5) * r
        if all(
            np.linalg.norm(np.subtract((cx, cy, cz), o.center)) > r + o.radius + 1.0
            for o in spheres
        ):
            spheres.append(Sphere((cx, cy, cz), r))
    return tuple(spheres)


def random_scene(
    rng: np.random.Generator,
    size: tuple[int, int] = (256, 256),
    n_spheres: int | None = None,
    backlit: bool = False,
    seed: int = 0,
) -> SceneSpec:
    """One random scene whose render has non-empty object and (unless
    back-lit) non-empty cast masks."""
    w, h = size
    plane_depth = float(max(w, h))
    while True:
        count = int(rng.integers(1, 4)) if n_spheres is None else n_spheres
        spec = SceneSpec(
            spheres=_random_spheres(rng, count, w, h, plane_depth),
            plane_depth=plane_depth,
            light=tuple(_random_light(rng, backlit)),
            resolution=(w, h),
            seed=seed,
        )
        bundle = render_scene(spec)
        if not bundle.object_mask.any():
            continue
        if not backlit and not bundle.gt.cast.any():
            continue
        return spec


def scene_suite(
    count: int,
    seed: int,
    size: tuple[int, int] = (256, 256),
    n_spheres: int | None = None,
    backlit_fraction: float = 0.2,
) -> list[SceneSpec]:
    """Deterministic list of random scenes.

    Lights are uniform on the cap z > 0.1, except a ``backlit_fraction`` of
    draws with z < 0. A back-lit scene has no cast shadow since the plane is
    behind every sphere.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    suite = []
    for i in range(count):
        backlit = bool(rng.random() < backlit_fraction)
        suite.append(random_scene(rng, size, n_spheres, backlit, seed=seed * 100003 + i))
    return suite


def sphere_on_plane_suite(
    count: int,
    seed: int,
    size: tuple[int, int] = (256, 256),
    elevation_z: tuple[float, float] = (0.3, 0.9),
) -> list[SceneSpec]:
    """Single spheres resting on the plane near the image centre.

    Light z is drawn from ``elevation_z`` so the whole cast shadow stays in
    frame; a shadow clipped by the image border drags its centroid.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    w, h = size
    plane_depth = float(max(w, h))
    rng = np.random.default_rng(seed)
    suite = []
    for i in range(count):
        r = rng.uniform(0.10, 0.15) * w
        cx = w / 2 + rng.uniform(-0.1, 0.1) * w
        cy = h / 2 + rng.uniform(-0.1, 0.1) * h
        z = rng.uniform(*elevation_z)
        phi = rng.uniform(0.0, 2.0 * np.pi)
        rho = np.sqrt(1.0 - z * z)
        suite.append(
            SceneSpec(
                spheres=(Sphere((cx, cy, plane_depth - r), r),),
                plane_depth=plane_depth,
                light=(rho * np.cos(phi), rho * np.sin(phi), z),
                resolution=(w, h),
                seed=seed * 100003 + i,
            )
        )
    return suite


def occlusion_suite(count: int, seed: int, size: tuple[int, int] = (256, 256)) -> list[SceneSpec]:
    """Two-sphere scenes where a small sphere sits between a larger one and the
    light, so part of the larger sphere that faces the light is shadowed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    w, h = size
    plane_depth = float(max(w, h))
    rng = np.random.default_rng(seed)
    suite = []
    while len(suite) < count:
        z = rng.uniform(0.3, 0.7)
        phi = rng.uniform(0.0, 2.0 * np.pi)
        rho = np.sqrt(1.0 - z * z)
        light = np.array([rho * np.cos(phi), rho * np.sin(phi), z])
        r1 = rng.uniform(0.15, 0.2) * w
        r2 = rng.uniform(0.4, 0.6) * r1
        c1 = np.array([w / 2, h / 2, plane_depth - r1])
        c2 = c1 - light * (r1 + r2 + rng.uniform(0.2, 0.5) * r1)
        if not (r2 <= c2[0] <= w - r2 and r2 <= c2[1] <= h - r2 and c2[2] - r2 >= 0):
            continue
        suite.append(
            SceneSpec(
                spheres=(Sphere(tuple(c1), r1), Sphere(tuple(c2), r2)),
                plane_depth=plane_depth,
                light=tuple(light),
                resolution=(w, h),
                seed=seed * 100003 + len(suite),
            )
        )
    return suite
