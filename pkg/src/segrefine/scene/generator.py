"""Synthetic tabletop scenes with exact ground truth.

Objects are flat-coloured rectangles, ellipses or rectangle/ellipse unions
resting on a tilted planar table. Each object sits at a constant height above
the table, so its depth follows the table row profile minus that height, and
taller objects occlude shorter ones.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from skimage import draw

from segrefine.geometry.masks import BinaryMask, LabelImage, connected_components
from segrefine.models.config import GeneratorConfig
from segrefine.scene.camera import CameraIntrinsics
from segrefine.scene.io import Scene

logger = logging.getLogger(__name__)

TABLE_COLOR = (128, 112, 96)


@dataclass(frozen=True)
class SceneObject:
    """One placed primitive. ``label`` is its ground-truth instance id."""

    label: int
    kind: str
    center: tuple[float, float]
    radii: tuple[float, float]
    angle: float
    height: float
    color: tuple[int, int, int]

    def footprint(self, shape: tuple[int, int]) -> np.ndarray:
        bits = np.zeros(shape, dtype=bool)
        if self.kind in ("rectangle", "union"):
            bits |= _rectangle(self.center, self.radii, self.angle, shape)
        if self.kind == "ellipse":
            bits |= _ellipse(self.center, self.radii, self.angle, shape)
        if self.kind == "union":
            # The ellipse sits on the end of the rectangle's long axis.
            row, col = self.center
            offset = self.radii[0]
            cap_center = (row - offset * np.sin(self.angle), col + offset * np.cos(self.angle))
            cap_radius = max(2.0, 0.8 * self.radii[1])
            bits |= _ellipse(cap_center, (cap_radius, cap_radius), 0.0, shape)
        return bits


def _rectangle(center: tuple[float, float], radii: tuple[float, float], angle: float, shape: tuple[int, int]) -> np.ndarray:
    row, col = center
    along, across = radii
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    corners = []
    for du, dv in ((along, across), (along, -across), (-along, -across), (-along, across)):
        # ``along`` runs at ``angle`` from the column axis; rows grow downward.
        corners.append((row - du * sin_a + dv * cos_a, col + du * cos_a + dv * sin_a))
    rows, cols = draw.polygon([c[0] for c in corners], [c[1] for c in corners], shape=shape)
    bits = np.zeros(shape, dtype=bool)
    bits[rows, cols] = True
    return bits


def _ellipse(center: tuple[float, float], radii: tuple[float, float], angle: float, shape: tuple[int, int]) -> np.ndarray:
    rows, cols = draw.ellipse(center[0], center[1], radii[1], radii[0], shape=shape, rotation=angle)
    bits = np.zeros(shape, dtype=bool)
    bits[rows, cols] = True
    return bits


def table_depth(shape: tuple[int, int], config: GeneratorConfig) -> np.ndarray:
    """Table plane depth per pixel: far at the top row, near at the bottom."""
    height, width = shape
    rows = (np.arange(height, dtype=np.float64) + 0.5) / height
    profile = config.table_distance + config.table_slope * (0.5 - rows)
    return np.repeat(profile[:, None], width, axis=1)


def visible_labels(objects: Sequence[SceneObject], shape: tuple[int, int]) -> np.ndarray:
    """Paint objects from lowest to highest; later paint occludes earlier."""
    labels = np.zeros(shape, dtype=np.int64)
    for obj in sorted(objects, key=lambda item: (item.height, item.label)):
        labels[obj.footprint(shape)] = obj.label
    return labels


def _placement_ok(labels: np.ndarray, objects: Sequence[SceneObject], min_area: int) -> bool:
    for obj in objects:
        visible = BinaryMask(labels == obj.label)
        if visible.area < min_area:
            return False
        if len(connected_components(visible, connectivity=8)) != 1:
            return False
    return True


def _random_object(rng: np.random.Generator, label: int, config: GeneratorConfig) -> SceneObject:
    height, width = config.height, config.width
    low, high = config.object_radius_range
    kind = str(config.shape_kinds[int(rng.integers(len(config.shape_kinds)))])
    radii = (float(rng.uniform(low, high)), float(rng.uniform(low, high)))
    margin = low
    center = (float(rng.uniform(margin, height - margin)), float(rng.uniform(margin, width - margin)))
    angle = float(rng.uniform(0.0, np.pi))
    lift = float(rng.uniform(*config.object_height_range))
    color = tuple(int(v) for v in rng.integers(20, 236, size=3))
    return SceneObject(label, kind, center, radii, angle, lift, color)  # type: ignore[arg-type]


def place_objects(rng: np.random.Generator, config: GeneratorConfig) -> list[SceneObject]:
    shape = (config.height, config.width)
    objects: list[SceneObject] = []
    for index in range(config.num_objects):
        for _ in range(config.max_placement_attempts):
            candidate = _random_object(rng, index + 1, config)
            trial = objects + [candidate]
            if _placement_ok(visible_labels(trial, shape), trial, config.min_object_area):
                objects = trial
                break
        else:
            logger.warning(
                "Could not place object %d of %d after %d attempts",
                index + 1,
                config.num_objects,
                config.max_placement_attempts,
            )
    # Labels stay 1..N in placement order even if some objects were skipped.
    return [
        SceneObject(i + 1, obj.kind, obj.center, obj.radii, obj.angle, obj.height, obj.color)
        for i, obj in enumerate(objects)
    ]


def render_scene(
    objects: Sequence[SceneObject],
    config: GeneratorConfig,
    *,
    noise_rng: np.random.Generator | None = None,
) -> Scene:
    shape = (config.height, config.width)
    labels = visible_labels(objects, shape)
    table = table_depth(shape, config)
    depth = table.copy()
    rgb = np.empty(shape + (3,), dtype=np.uint8)
    rgb[...] = TABLE_COLOR
    for obj in objects:
        visible = labels == obj.label
        depth[visible] = table[visible] - obj.height
        rgb[visible] = obj.color
    if config.depth_noise > 0 and noise_rng is not None:
        depth = depth + noise_rng.normal(0.0, config.depth_noise, size=shape)
    # Millimetre quantisation keeps saved scenes bit-exact on reload.
    depth = np.maximum(np.rint(depth * 1000.0), 1.0) / 1000.0
    label_image = LabelImage(labels)
    return Scene(
        rgb=rgb,
        depth=depth,
        camera=CameraIntrinsics.for_frame(*shape),
        labels=label_image,
        foreground=label_image.foreground(),
    )


def generate_objects(seed: int, config: GeneratorConfig) -> list[SceneObject]:
    return place_objects(np.random.default_rng(seed), config)


def generate_scene(seed: int, config: GeneratorConfig | None = None) -> Scene:
    """Deterministic synthetic scene for ``seed``."""
    config = config or GeneratorConfig()
    rng = np.random.default_rng(seed)
    objects = place_objects(rng, config)
    scene = render_scene(objects, config, noise_rng=rng)
    logger.debug("Generated scene seed=%s with %d objects", seed, len(objects))
    return scene
