"""Boundary-probability and delete-score providers.

Boundary maps are full-frame rasters restricted to the queried mask. Delete
scores lie in [0, 1]; high means the mask should not exist.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Protocol

import numpy as np
from scipy.special import expit

from segrefine.errors import DimensionMismatch, InvalidPayload, MissingFile, ProviderUnavailable
from segrefine.geometry.masks import BinaryMask, dilate
from segrefine.graph.features import AREA, DEPTH_MEAN, Z_EXTENT
from segrefine.infrastructure.filesystem import open_directory
from segrefine.models.config import EngineConfig
from segrefine.scene.io import Scene, read_uint16_png

if TYPE_CHECKING:
    from segrefine.graph.seg_graph import SegGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BoundaryMap:
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=np.float64, copy=True)
        if probs.ndim != 2:
            raise DimensionMismatch(f"boundary map must be 2-D, got {probs.shape}")
        if not np.all(np.isfinite(probs)) or probs.min(initial=0.0) < 0 or probs.max(initial=0.0) > 1:
            raise InvalidPayload("boundary probabilities must lie in [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.probs.shape[0]), int(self.probs.shape[1]))


class BoundaryProvider(Protocol):
    name: str

    def boundary_map(self, scene: Scene, mask: BinaryMask) -> BoundaryMap: ...


class DeleteProvider(Protocol):
    name: str

    def score_mask(self, graph: "SegGraph", mask: BinaryMask) -> float: ...


def _neighbour_steps(values: np.ndarray, inside: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel change flags / magnitudes towards 4-neighbours, both pixels inside."""
    changed = np.zeros(values.shape, dtype=bool)
    step = np.zeros(values.shape, dtype=np.float64)
    pairs = (
        ((slice(None), slice(1, None)), (slice(None), slice(None, -1))),
        ((slice(1, None), slice(None)), (slice(None, -1), slice(None))),
    )
    for here, there in pairs:
        both = inside[here] & inside[there]
        diff = np.abs(values[here].astype(np.float64) - values[there].astype(np.float64))
        diff = np.where(both, diff, 0.0)
        for side in (here, there):
            changed[side] |= diff > 0
            step[side] = np.maximum(step[side], diff)
    return changed, step


class GroundTruthBoundary:
    """1 on ground-truth label changes inside the mask, dilated by one pixel."""

    name = "ground_truth"

    def boundary_map(self, scene: Scene, mask: BinaryMask) -> BoundaryMap:
        if scene.labels is None:
            raise ProviderUnavailable("ground-truth boundary maps need scene labels")
        changed, _ = _neighbour_steps(scene.labels.labels, mask.bits)
        marked = dilate(BinaryMask(changed), 1) & mask
        return BoundaryMap(marked.bits.astype(np.float64))


class DepthGradientBoundary:
    """Largest depth step to a 4-neighbour inside the mask, scaled and clipped."""

    name = "depth_gradient"

    def __init__(self, scale: float = 0.02) -> None:
        self.scale = scale

    def boundary_map(self, scene: Scene, mask: BinaryMask) -> BoundaryMap:
        inside = mask.bits & (scene.depth > 0)
        _, step = _neighbour_steps(scene.depth, inside)
        return BoundaryMap(np.clip(step / self.scale, 0.0, 1.0))


@dataclass
class FileBoundary:
    """Boundary raster read once from a 16-bit PNG (value / 65535)."""

    path: Path
    name: str = "from_file"
    _probs: np.ndarray | None = field(default=None, repr=False)

    def _load(self) -> np.ndarray:
        if self._probs is None:
            path = Path(self.path)
            if not path.exists():
                raise MissingFile(str(path))
            with open_directory(path.parent) as handle:
                raw = read_uint16_png(handle, path.name)
            self._probs = raw.astype(np.float64) / 65535.0
        return self._probs

    def boundary_map(self, scene: Scene, mask: BinaryMask) -> BoundaryMap:
        probs = self._load()
        if probs.shape != scene.shape:
            raise DimensionMismatch(
                f"boundary map {probs.shape} does not match frame {scene.shape}",
                filename=Path(self.path).name,
            )
        return BoundaryMap(np.where(mask.bits, probs, 0.0))


class GroundTruthDelete:
    """d = 1 - max IoU against the ground-truth instances."""

    name = "ground_truth"

    def score_mask(self, graph: "SegGraph", mask: BinaryMask) -> float:
        labels = graph.context.scene.labels
        if labels is None:
            raise ProviderUnavailable("ground-truth delete scores need scene labels")
        if mask.is_empty:
            return 1.0
        flat = labels.labels.ravel()
        size = int(flat.max()) + 1
        gt_area = np.bincount(flat, minlength=size)
        inter = np.bincount(flat[mask.bits.ravel()], minlength=size)
        union = mask.area + gt_area - inter
        ious = inter[1:] / np.maximum(union[1:], 1)
        best = float(ious.max()) if ious.size else 0.0
        return float(np.clip(1.0 - best, 0.0, 1.0))


@dataclass(frozen=True)
class HeuristicDelete:
    """Logistic score of the descriptor difference to the background node.

    Masks raised towards the camera relative to the background get low
    scores; flat patches level with the table score high.
    """

    bias: float = 3.5
    area_weight: float = 2.0
    depth_mean_weight: float = 40.0
    z_extent_weight: float = 5.0
    name: str = "heuristic"

    def score_mask(self, graph: "SegGraph", mask: BinaryMask) -> float:
        encoder = graph.context.encoder
        scene = graph.context.scene
        node = encoder.encode(scene, mask)
        background = graph.features(graph.background)
        diff = node - background
        logit = (
            self.bias
            + self.area_weight * diff[AREA]
            + self.depth_mean_weight * diff[DEPTH_MEAN]
            + self.z_extent_weight * diff[Z_EXTENT]
        )
        return float(expit(logit))


def delete_score(graph: "SegGraph", node_id: int, provider: DeleteProvider) -> float:
    if node_id == graph.background:
        raise InvalidPayload("the background node cannot be deleted")
    return provider.score_mask(graph, graph.mask(node_id))


def boundary_map(scene: Scene, mask: BinaryMask, provider: BoundaryProvider) -> BoundaryMap:
    return provider.boundary_map(scene, mask)


def make_boundary_provider(config: EngineConfig) -> BoundaryProvider:
    if config.boundary_provider == "ground_truth":
        return GroundTruthBoundary()
    if config.boundary_provider == "depth_gradient":
        return DepthGradientBoundary(config.depth_gradient_scale)
    return FileBoundary(Path(str(config.boundary_map_path)))


def make_delete_provider(config: EngineConfig) -> DeleteProvider:
    if config.delete_provider == "ground_truth":
        return GroundTruthDelete()
    return HeuristicDelete()
