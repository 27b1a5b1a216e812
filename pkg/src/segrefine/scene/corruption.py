"""Seeded segmentation corruption: line splits, neighbour merges, deletions, blobs."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np
from scipy import ndimage
from skimage import draw

from segrefine.geometry.masks import EIGHT_CONNECTED, BinaryMask, LabelImage, component_labels
from segrefine.models.config import ALL_OPERATIONS, CorruptionConfig

logger = logging.getLogger(__name__)

_Corruptor = Callable[[np.ndarray, np.random.Generator, CorruptionConfig], np.ndarray | None]


def _ids(labels: np.ndarray) -> list[int]:
    return [int(v) for v in np.unique(labels) if v > 0]


def _split_by_line(labels: np.ndarray, rng: np.random.Generator, config: CorruptionConfig) -> np.ndarray | None:
    candidates = [label for label in _ids(labels) if np.count_nonzero(labels == label) >= 2 * config.min_piece_area]
    if not candidates:
        return None
    label = candidates[int(rng.integers(len(candidates)))]
    mask = labels == label
    rows, cols = np.nonzero(mask)
    center_row, center_col = rows.mean(), cols.mean()
    theta = rng.uniform(0.0, np.pi)
    side = (rows - center_row) * np.cos(theta) - (cols - center_col) * np.sin(theta) >= 0
    piece_a = np.zeros_like(mask)
    piece_a[rows[side], cols[side]] = True
    piece_b = mask & ~piece_a
    for piece in (piece_a, piece_b):
        if np.count_nonzero(piece) < config.min_piece_area:
            return None
        if component_labels(BinaryMask(piece), connectivity=8)[1] != 1:
            return None
    out = labels.copy()
    out[piece_b] = int(labels.max()) + 1
    return out


def _merge_neighbours(labels: np.ndarray, rng: np.random.Generator, config: CorruptionConfig) -> np.ndarray | None:
    ids = _ids(labels)
    pairs = []
    for index, first in enumerate(ids):
        reach = ndimage.distance_transform_edt(labels != first) <= config.merge_distance
        for second in ids[index + 1 :]:
            if np.any(reach & (labels == second)):
                pairs.append((first, second))
    if not pairs:
        return None
    keep, absorb = pairs[int(rng.integers(len(pairs)))]
    out = labels.copy()
    out[labels == absorb] = keep
    return out


def _delete_instance(labels: np.ndarray, rng: np.random.Generator, config: CorruptionConfig) -> np.ndarray | None:
    ids = _ids(labels)
    if not ids:
        return None
    out = labels.copy()
    out[labels == ids[int(rng.integers(len(ids)))]] = 0
    return out


def _add_blob(labels: np.ndarray, rng: np.random.Generator, config: CorruptionConfig) -> np.ndarray | None:
    background = labels == 0
    rows, cols = np.nonzero(background)
    if rows.size == 0:
        return None
    pick = int(rng.integers(rows.size))
    center = (int(rows[pick]), int(cols[pick]))
    low, high = config.blob_radius_range
    radii = rng.uniform(low, high, size=2)
    angle = rng.uniform(0.0, np.pi)
    blob = np.zeros_like(background)
    rr, cc = draw.ellipse(center[0], center[1], radii[0], radii[1], shape=labels.shape, rotation=angle)
    blob[rr, cc] = True
    blob &= background
    if not blob[center]:
        return None
    pieces, _ = ndimage.label(blob, structure=EIGHT_CONNECTED)
    blob = pieces == pieces[center]
    if np.count_nonzero(blob) < config.min_piece_area:
        return None
    out = labels.copy()
    out[blob] = int(labels.max()) + 1
    return out


_CORRUPTORS: dict[str, _Corruptor] = {
    "split": _split_by_line,
    "merge": _merge_neighbours,
    "delete": _delete_instance,
    "add": _add_blob,
}


def corrupt_segmentation(
    labels: LabelImage, seed: int, config: CorruptionConfig | None = None
) -> LabelImage:
    """Apply ``config.num_corruptions`` random corruptions; deterministic in ``seed``.

    A corruption whose kind has no valid target is redrawn up to
    ``config.max_attempts`` times, after which it is skipped.
    """
    config = config or CorruptionConfig()
    rng = np.random.default_rng(seed)
    kinds = [kind for kind in ALL_OPERATIONS if config.weights[kind] > 0]
    weights = np.asarray([config.weights[kind] for kind in kinds], dtype=np.float64)
    current = np.array(labels.labels, copy=True)
    applied: list[str] = []
    for _ in range(config.num_corruptions):
        for _ in range(config.max_attempts):
            kind = kinds[int(rng.choice(len(kinds), p=weights / weights.sum()))]
            result = _CORRUPTORS[kind](current, rng, config)
            if result is not None:
                current = result
                applied.append(kind)
                break
    logger.debug("Corruptions applied (seed=%s): %s", seed, applied)
    return LabelImage(current)
