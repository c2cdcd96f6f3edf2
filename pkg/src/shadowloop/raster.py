"""Grid conventions, mask algebra and dataset I/O.

Grids are plain numpy arrays laid out ``(H, W)`` or ``(H, W, C)``:

* numeric grids (images, normals, depth, logits) are ``float64``
* binary masks are ``bool``
* tri-class label grids are ``uint8`` with 0=background, 1=cast, 2=attached

Normals live in the camera-centric frame: +x right, +y down, +z into the
scene. A fronto-parallel surface facing the camera has n = (0, 0, -1).
A light direction is a unit 3-vector pointing from the light toward the scene.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

BACKGROUND, CAST, ATTACHED = 0, 1, 2

NORMAL_TOLERANCE = 1e-3
LIGHT_TOLERANCE = 1e-9

# Dataset directory layout; depth is an extension stored as .npy
LAYOUT = ("images", "normals", "cast", "attached", "undefined", "objects", "light")


class DataError(ValueError):
    """Input data is malformed or violates a grid invariant."""


@dataclass(frozen=True)
class TriClassMask:
    """Per-pixel {bg, cast, attached} labels plus a separate undefined mask.

    Undefined pixels always carry the background label; they are tracked only
    through ``undefined``.
    """

    labels: np.ndarray
    undefined: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint8)
        undefined = np.asarray(self.undefined, dtype=bool)
        if labels.ndim != 2 or undefined.shape != labels.shape:
            raise DataError(
                f"labels {labels.shape} and undefined {undefined.shape} must be equal 2-D shapes"
            )
        if labels.max(initial=0) > ATTACHED:
            raise DataError("labels must be in {0, 1, 2}")
        if np.any(labels[undefined] != BACKGROUND):
            raise DataError("undefined pixels must carry the background label")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "undefined", undefined)

    @classmethod
    def from_masks(cls, cast, attached, undefined=None) -> "TriClassMask":
        cast = np.asarray(cast, dtype=bool)
        attached = np.asarray(attached, dtype=bool)
        if undefined is None:
            undefined = np.zeros_like(cast)
        undefined = np.asarray(undefined, dtype=bool)
        labels = np.zeros(cast.shape, dtype=np.uint8)
        labels[cast] = CAST
        labels[attached] = ATTACHED
        labels[undefined] = BACKGROUND
        return cls(labels, undefined)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def cast(self) -> np.ndarray:
        return self.labels == CAST

    @property
    def attached(self) -> np.ndarray:
        return self.labels == ATTACHED

    @property
    def union(self) -> np.ndarray:
        """Full-shadow mask: cast, attached and undefined pixels."""
        return (self.labels != BACKGROUND) | self.undefined


def check_grid(arr: np.ndarray, channels: int | None = None, name: str = "grid") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim not in (2, 3):
        raise DataError(f"{name} must be 2-D or 3-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"{name} must be at least 1x1")
    got = 1 if arr.ndim == 2 else arr.shape[2]
    if channels is not None and got != channels:
        raise DataError(f"{name} needs {channels} channel(s), got {got}")
    return arr


def check_normals(normals: np.ndarray) -> np.ndarray:
    normals = check_grid(normals, 3, "normal map").astype(np.float64, copy=False)
    norms = np.linalg.norm(normals, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= NORMAL_TOLERANCE):
        raise DataError("normal map contains non-unit vectors")
    return normals


def check_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    mask = check_grid(mask, 1, name)
    if mask.dtype != bool:
        if not np.isin(mask, (0, 1)).all():
            raise DataError(f"{name} values must be 0 or 1")
        mask = mask.astype(bool)
    return mask


def check_same_shape(*grids: np.ndarray) -> None:
    shapes = {np.shape(g)[:2] for g in grids}
    if len(shapes) != 1:
        raise DataError(f"dimension mismatch: {sorted(shapes)}")


def as_light(vec, tol: float | None = None) -> np.ndarray:
    """Return ``vec`` as a float64 unit light direction.

    With ``tol`` the input must already be unit within ``tol``; otherwise it is
    normalized. Zero and non-finite vectors are rejected.
    """
    v = np.asarray(vec, dtype=np.float64).reshape(-1)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise DataError(f"light direction must be 3 finite numbers, got {vec!r}")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DataError("light direction is the zero vector")
    if tol is not None and abs(norm - 1.0) > tol:
        raise DataError(f"light direction is not unit length (norm {norm})")
    return v / norm


# -- masks ------------------------------------------------------------------


def _open_image(path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"{path} is not a readable image: {exc}") from exc
    return img


def load_mask(path) -> np.ndarray:
    img = _open_image(path)
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img) > 127


def save_mask(mask: np.ndarray, path) -> None:
    mask = check_mask(mask)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def load_image(path) -> np.ndarray:
    """RGB image as float64 in [0, 1]."""
    img = _open_image(path).convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def save_image(image: np.ndarray, path) -> None:
    image = check_grid(image, 3, "image")
    q = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(path)


# -- normals ----------------------------------------------------------------


def encode_normals(normals: np.ndarray) -> np.ndarray:
    """Quantize unit normals to uint8 with q = round((c + 1) / 2 * 255)."""
    normals = check_normals(normals)
    return np.floor((normals + 1.0) * 0.5 * 255.0 + 0.5).astype(np.uint8)


def decode_normals(encoded: np.ndarray) -> np.ndarray:
    encoded = check_grid(encoded, 3, "encoded normals")
    n = encoded.astype(np.float64) / 255.0 * 2.0 - 1.0
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def save_normals(normals: np.ndarray, path) -> None:
    Image.fromarray(encode_normals(normals), mode="RGB").save(path)


def load_normals(path) -> np.ndarray:
    img = _open_image(path)
    if img.mode != "RGB":
        raise DataError(f"{path}: normal maps must be 3-channel RGB, got mode {img.mode}")
    return decode_normals(np.asarray(img))


# -- depth ------------------------------------------------------------------


def save_depth(depth: np.ndarray, path) -> None:
    np.save(path, np.asarray(depth, dtype=np.float64), allow_pickle=False)


def load_depth(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        depth = np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise DataError(f"{path} is not a depth array: {exc}") from exc
    depth = check_grid(depth, 1, "depth").astype(np.float64)
    if not np.all(np.isfinite(depth)) or depth.min() < 0:
        raise DataError("depth must be finite and non-negative")
    return depth


# -- light ------------------------------------------------------------------


def load_light(path) -> np.ndarray:
    """Read a light direction from ``x y z`` text or a JSON object with x, y, z."""
    text = Path(path).read_text().strip()
    try:
        if text.startswith("{"):
            doc = json.loads(text)
            values = [doc["x"], doc["y"], doc["z"]]
        else:
            values = [float(tok) for tok in text.replace(",", " ").split()]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed light record: {exc}") from exc
    if len(values) != 3:
        raise DataError(f"{path}: expected 3 components, got {len(values)}")
    return as_light(values)


def save_light(light, path) -> None:
    x, y, z = (float(c) for c in np.asarray(light, dtype=np.float64))
    # json writes shortest round-tripping reprs
    Path(path).write_text(json.dumps({"x": x, "y": y, "z": z}) + "\n")


# -- full-shadow derivation ---------------------------------------------------


def derive_full_mask(
    shadow_img: np.ndarray, shadow_free_img: np.ndarray, threshold: float = 0.05
) -> np.ndarray:
    """Shadow where the channel-mean darkening exceeds ``threshold``."""
    shadow_img = check_grid(shadow_img, name="shadow image").astype(np.float64)
    shadow_free_img = check_grid(shadow_free_img, name="shadow-free image").astype(np.float64)
    if shadow_img.shape != shadow_free_img.shape:
        raise DataError(
            f"dimension mismatch: {shadow_img.shape} vs {shadow_free_img.shape}"
        )
    diff = shadow_free_img - shadow_img
    if diff.ndim == 3:
        diff = diff.mean(axis=-1)
    return diff > threshold


# -- dataset layout ---------------------------------------------------------


def dataset_paths(root, name: str) -> dict[str, Path]:
    """File paths of one record ``name`` under a dataset directory."""
    root = Path(root)
    return {
        "images": root / "images" / f"{name}.png",
        "normals": root / "normals" / f"{name}.png",
        "cast": root / "cast" / f"{name}.png",
        "attached": root / "attached" / f"{name}.png",
        "undefined": root / "undefined" / f"{name}.png",
        "objects": root / "objects" / f"{name}.png",
        "light": root / "light" / f"{name}.json",
        "depth": root / "depth" / f"{name}.npy",
    }


def make_layout(root) -> None:
    for sub in LAYOUT + ("depth",):
        os.makedirs(Path(root) / sub, exist_ok=True)


def record_names(root, sub: str = "cast") -> list[str]:
    folder = Path(root) / sub
    if not folder.is_dir():
        raise DataError(f"{folder} is not a directory")
    return sorted(p.stem for p in folder.glob("*.png"))


def load_tri_class(root, name: str) -> TriClassMask:
    paths = dataset_paths(root, name)
    cast = load_mask(paths["cast"])
    attached = load_mask(paths["attached"])
    undefined = load_mask(paths["undefined"]) if paths["undefined"].exists() else None
    return TriClassMask.from_masks(cast, attached, undefined)


def save_tri_class(mask: TriClassMask, root, name: str) -> None:
    paths = dataset_paths(root, name)
    for sub in ("cast", "attached", "undefined"):
        paths[sub].parent.mkdir(parents=True, exist_ok=True)
    save_mask(mask.cast, paths["cast"])
    save_mask(mask.attached, paths["attached"])
    save_mask(mask.undefined, paths["undefined"])
