"""Deterministic node and edge descriptors.

Layout of the 22 leading entries (the rest is zero padding):

    0-1    centroid (row, col), pixel centres normalised by frame size
    2      area fraction
    3-6    bbox (row_min, col_min, row_max + 1, col_max + 1), normalised
    7      boundary length / area
    8-13   RGB mean and std inside the mask, / 255
    14-17  depth mean, std, min, max over valid pixels (metres)
    18-20  x, y, z extent of the backprojected points (metres)
    21     1.0 when the mask touches the image border
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from segrefine.errors import DimensionMismatch, EmptyMask, InvalidPayload
from segrefine.geometry.masks import BinaryMask, boundary
from segrefine.models.config import NODE_FEATURE_COUNT
from segrefine.scene.io import Scene

AREA, DEPTH_MEAN, Z_EXTENT = 2, 14, 20


class NodeEncoder(Protocol):
    dim: int

    def encode(self, scene: Scene, mask: BinaryMask, *, allow_empty: bool = False) -> np.ndarray: ...


def _pad(values: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros(dim, dtype=np.float64)
    count = min(dim, values.size)
    out[:count] = values[:count]
    return out


class HandcraftedEncoder:
    def __init__(self, dim: int = 32) -> None:
        if dim < NODE_FEATURE_COUNT:
            raise DimensionMismatch(f"node feature dim must be >= {NODE_FEATURE_COUNT}, got {dim}")
        self.dim = dim

    def encode(self, scene: Scene, mask: BinaryMask, *, allow_empty: bool = False) -> np.ndarray:
        if mask.shape != scene.shape:
            raise DimensionMismatch(f"mask {mask.shape} is outside the scene frame {scene.shape}")
        if mask.is_empty:
            if allow_empty:
                return np.zeros(self.dim, dtype=np.float64)
            raise EmptyMask("cannot encode an empty instance mask")

        height, width = mask.shape
        bits = mask.bits
        rows, cols = np.nonzero(bits)
        area = rows.size
        features = np.zeros(NODE_FEATURE_COUNT, dtype=np.float64)
        features[0] = (rows.mean() + 0.5) / height
        features[1] = (cols.mean() + 0.5) / width
        features[2] = area / float(height * width)
        features[3:7] = (
            rows.min() / height,
            cols.min() / width,
            (rows.max() + 1) / height,
            (cols.max() + 1) / width,
        )
        features[7] = boundary(mask).area / float(area)

        colors = scene.rgb[bits].astype(np.float64) / 255.0
        features[8:11] = colors.mean(axis=0)
        features[11:14] = colors.std(axis=0)

        depth = scene.depth[bits]
        valid = depth > 0
        if np.any(valid):
            depth = depth[valid]
            features[14:18] = (depth.mean(), depth.std(), depth.min(), depth.max())
            points = scene.point_cloud.xyz[bits][valid]
            features[18:21] = points.max(axis=0) - points.min(axis=0)

        features[21] = float(
            bits[0, :].any() or bits[-1, :].any() or bits[:, 0].any() or bits[:, -1].any()
        )
        return _pad(features, self.dim)


def encode_node(scene: Scene, mask: BinaryMask, encoder: NodeEncoder | None = None) -> np.ndarray:
    return (encoder or HandcraftedEncoder()).encode(scene, mask)


def encode_edge(
    scene: Scene,
    mask_i: BinaryMask,
    mask_j: BinaryMask,
    *,
    encoder: NodeEncoder | None = None,
    edge_dim: int = 32,
) -> np.ndarray:
    """Union-mask descriptor, truncated or zero-padded to ``edge_dim``."""
    if mask_i.intersects(mask_j):
        raise InvalidPayload("edge masks must be disjoint")
    return _pad(encode_node(scene, mask_i | mask_j, encoder), edge_dim)
