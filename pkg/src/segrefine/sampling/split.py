"""Split proposals: a maximum-probability path between two contour points.

Endpoints are drawn from contour pixels weighted by a Gaussian average of the
sizes of thresholded boundary components, so long confident boundaries attract
both ends. The path maximises the product of per-pixel probabilities, found as
a shortest path under cost ``-log(p + eps)`` over 8-connected mask pixels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from segrefine.errors import DegeneratePath, DimensionMismatch, NoPositiveWeight
from segrefine.geometry.contours import trace_contour
from segrefine.geometry.masks import EIGHT_CONNECTED, BinaryMask
from segrefine.sampling.providers import BoundaryMap

logger = logging.getLogger(__name__)

PATH_EPS = 1e-4
# Keeps every step cost strictly positive; csgraph drops explicit zero weights.
_MAX_PROB = 1.0 - 1e-12
WEIGHT_SIGMA = 2.0
WEIGHT_RADIUS = 5

_STEPS = ((0, 1), (1, -1), (1, 0), (1, 1))
# Ascending offsets, so neighbours come out in (row, col) order.
_NEIGHBOURS = tuple((d_row, d_col) for d_row in (-1, 0, 1) for d_col in (-1, 0, 1) if d_row or d_col)
# Path costs this close, relative to their size, count as equal.
PATH_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class SplitProposal:
    path: tuple[tuple[int, int], ...]
    score: float
    mask_id: int = -1

    def path_mask(self, shape: tuple[int, int]) -> BinaryMask:
        return BinaryMask.from_pixels(shape[0], shape[1], self.path)


def pixel_costs(probs: np.ndarray) -> np.ndarray:
    return -np.log(np.minimum(probs + PATH_EPS, _MAX_PROB))


def path_cost(path: list[tuple[int, int]] | tuple[tuple[int, int], ...], probs: np.ndarray) -> float:
    """Cost of entering every path pixel; diagonal steps weigh √2."""
    costs = pixel_costs(probs)
    total = float(costs[path[0]])
    for (r0, c0), (r1, c1) in zip(path[:-1], path[1:]):
        factor = np.sqrt(2.0) if (r0 != r1 and c0 != c1) else 1.0
        total += factor * float(costs[r1, c1])
    return total


def minimum_cost_path(
    mask: BinaryMask, probs: np.ndarray, start: tuple[int, int], end: tuple[int, int]
) -> list[tuple[int, int]]:
    """Cheapest 8-connected path from ``start`` to ``end`` through mask pixels.

    Among paths whose costs agree within ``PATH_TIE_RTOL`` the one whose pixels,
    read from ``end`` back to ``start``, form the smallest (row, col) sequence wins.
    """
    if probs.shape != mask.shape:
        raise DimensionMismatch(f"boundary map {probs.shape} does not match mask {mask.shape}")
    if not (mask.bits[start] and mask.bits[end]):
        raise DegeneratePath("path endpoints must lie on the mask")
    height, width = mask.shape
    index = np.full(mask.shape, -1, dtype=np.int64)
    pixels = mask.pixels()
    index[pixels[:, 0], pixels[:, 1]] = np.arange(len(pixels))
    costs = pixel_costs(probs)

    sources, targets, weights = [], [], []
    for d_row, d_col in _STEPS:
        factor = np.sqrt(2.0) if d_row and d_col else 1.0
        rows, cols = pixels[:, 0] + d_row, pixels[:, 1] + d_col
        inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
        src = pixels[inside]
        rows, cols = rows[inside], cols[inside]
        linked = mask.bits[rows, cols]
        src, rows, cols = src[linked], rows[linked], cols[linked]
        a = index[src[:, 0], src[:, 1]]
        b = index[rows, cols]
        # Directed both ways: each step pays the cost of the pixel it enters.
        sources.extend([a, b])
        targets.extend([b, a])
        weights.extend([factor * costs[rows, cols], factor * costs[src[:, 0], src[:, 1]]])

    count = len(pixels)
    graph = coo_matrix(
        (np.concatenate(weights), (np.concatenate(sources), np.concatenate(targets))),
        shape=(count, count),
    ).tocsr()
    origin, goal = int(index[start]), int(index[end])
    distances, predecessors = dijkstra(graph, directed=True, indices=origin, return_predecessors=True)
    if not np.isfinite(distances[goal]):
        raise DegeneratePath("path endpoints are not connected inside the mask")
    chain = [goal]
    while chain[-1] != origin:
        chain.append(_smallest_predecessor(chain[-1], index, pixels, costs, distances, int(predecessors[chain[-1]])))
    chain.reverse()
    return [(int(pixels[i, 0]), int(pixels[i, 1])) for i in chain]


def _smallest_predecessor(
    node: int,
    index: np.ndarray,
    pixels: np.ndarray,
    costs: np.ndarray,
    distances: np.ndarray,
    fallback: int,
) -> int:
    """First neighbour in (row, col) order that lies on a cheapest path into ``node``."""
    height, width = index.shape
    row, col = int(pixels[node, 0]), int(pixels[node, 1])
    here = distances[node]
    for d_row, d_col in _NEIGHBOURS:
        r, c = row + d_row, col + d_col
        if not (0 <= r < height and 0 <= c < width) or index[r, c] < 0:
            continue
        before = distances[index[r, c]]
        factor = np.sqrt(2.0) if d_row and d_col else 1.0
        # Distances strictly fall along the walk.
        if before < here and abs(before + factor * costs[row, col] - here) <= PATH_TIE_RTOL * here:
            return int(index[r, c])
    return fallback


def contour_weights(points: list[tuple[int, int]], probs: np.ndarray, nu: float) -> np.ndarray:
    """Unnormalised endpoint weights for ``points``."""
    confident = probs > nu
    components, count = ndimage.label(confident, structure=EIGHT_CONNECTED)
    sizes = np.bincount(components.ravel(), minlength=count + 1).astype(np.float64)
    sizes[0] = 0.0
    p_tilde = sizes[components]
    smoothed = ndimage.gaussian_filter(
        p_tilde, sigma=WEIGHT_SIGMA, truncate=WEIGHT_RADIUS / WEIGHT_SIGMA, mode="constant"
    )
    rows = np.fromiter((p[0] for p in points), dtype=np.int64, count=len(points))
    cols = np.fromiter((p[1] for p in points), dtype=np.int64, count=len(points))
    return smoothed[rows, cols]


def sample_split(
    mask: BinaryMask,
    bmap: BoundaryMap,
    rng: np.random.Generator,
    nu: float = 0.5,
    *,
    mask_id: int = -1,
) -> SplitProposal:
    if bmap.shape != mask.shape:
        raise DimensionMismatch(f"boundary map {bmap.shape} does not match mask {mask.shape}")
    points = trace_contour(mask).unique_points()
    if len(points) < 2:
        raise DegeneratePath("mask has fewer than two contour points")
    weights = contour_weights(points, bmap.probs, nu)
    weights = np.where(weights > 0, weights, 0.0)
    if np.count_nonzero(weights) < 2:
        raise NoPositiveWeight("fewer than two contour pixels carry split weight")
    first, second = rng.choice(len(points), size=2, replace=False, p=weights / weights.sum())
    path = minimum_cost_path(mask, bmap.probs, points[int(first)], points[int(second)])
    if len(path) < 2:
        raise DegeneratePath("split path is shorter than two pixels")
    score = float(np.mean([bmap.probs[pixel] for pixel in path]))
    logger.debug("Split path of %d px on node %d scored %.3f", len(path), mask_id, score)
    return SplitProposal(path=tuple(path), score=float(np.clip(score, 0.0, 1.0)), mask_id=mask_id)
