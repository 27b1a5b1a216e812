"""Raster geometry over binary masks and label images."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy import ndimage

from segrefine.errors import DimensionMismatch, EmptyMask, InvalidPayload

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)
EIGHT_CONNECTED = ndimage.generate_binary_structure(2, 2)

# Slack for comparing Euclidean distances computed from integer offsets.
_DISTANCE_EPS = 1e-9


def _frozen(array: np.ndarray, dtype: type) -> np.ndarray:
    frozen = np.array(array, dtype=dtype, copy=True)
    frozen.setflags(write=False)
    return frozen


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Immutable H×W boolean raster."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise DimensionMismatch(f"BinaryMask needs a non-empty 2-D array, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits, bool))

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def from_pixels(
        cls, height: int, width: int, pixels: Iterable[tuple[int, int]]
    ) -> "BinaryMask":
        bits = np.zeros((height, width), dtype=bool)
        for row, col in pixels:
            bits[row, col] = True
        return cls(bits)

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    def pixels(self) -> np.ndarray:
        """(n, 2) array of (row, col) coordinates in row-major order."""
        return np.argwhere(self.bits)

    def bbox(self) -> tuple[int, int, int, int]:
        """(row_min, col_min, row_max, col_max), inclusive."""
        if self.is_empty:
            raise EmptyMask("bounding box of an empty mask")
        rows = np.flatnonzero(self.bits.any(axis=1))
        cols = np.flatnonzero(self.bits.any(axis=0))
        return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])

    def _check_frame(self, other: "BinaryMask") -> None:
        if self.shape != other.shape:
            raise DimensionMismatch(f"mask frames differ: {self.shape} vs {other.shape}")

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        self._check_frame(other)
        return BinaryMask(self.bits | other.bits)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        self._check_frame(other)
        return BinaryMask(self.bits & other.bits)

    def __sub__(self, other: "BinaryMask") -> "BinaryMask":
        self._check_frame(other)
        return BinaryMask(self.bits & ~other.bits)

    def __invert__(self) -> "BinaryMask":
        return BinaryMask(~self.bits)

    def intersects(self, other: "BinaryMask") -> bool:
        self._check_frame(other)
        return bool(np.any(self.bits & other.bits))

    def issubset(self, other: "BinaryMask") -> bool:
        self._check_frame(other)
        return not np.any(self.bits & ~other.bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash((self.shape, np.packbits(self.bits).tobytes()))

    def __repr__(self) -> str:
        return f"BinaryMask({self.height}x{self.width}, area={self.area})"


@dataclass(frozen=True, eq=False)
class LabelImage:
    """Immutable H×W instance labeling; 0 is background."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise DimensionMismatch(f"LabelImage needs a non-empty 2-D array, got shape {labels.shape}")
        if labels.size and labels.min() < 0:
            raise InvalidPayload("label images hold non-negative integers only")
        object.__setattr__(self, "labels", _frozen(labels, np.int64))

    @classmethod
    def zeros(cls, height: int, width: int) -> "LabelImage":
        return cls(np.zeros((height, width), dtype=np.int64))

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def ids(self) -> list[int]:
        values = np.unique(self.labels)
        return [int(v) for v in values if v > 0]

    def mask(self, label: int) -> BinaryMask:
        return BinaryMask(self.labels == label)

    def foreground(self) -> BinaryMask:
        return BinaryMask(self.labels > 0)

    def relabeled(self) -> "LabelImage":
        """Same partition with ids renumbered 1..N in ascending order of the old ids."""
        ids = self.ids()
        lookup = np.zeros(int(self.labels.max()) + 1, dtype=np.int64)
        for new_id, old_id in enumerate(ids, start=1):
            lookup[old_id] = new_id
        return LabelImage(lookup[self.labels])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.labels, other.labels))

    def __hash__(self) -> int:
        return hash((self.shape, self.labels.tobytes()))

    def __repr__(self) -> str:
        return f"LabelImage({self.height}x{self.width}, ids={len(self.ids())})"


def same_partition(a: LabelImage, b: LabelImage) -> bool:
    """True when ``a`` and ``b`` differ only by a renaming of positive ids."""
    if a.shape != b.shape:
        return False
    return canonical_labels(a) == canonical_labels(b)


def _first_seen_order(li: LabelImage) -> list[int]:
    flat = li.labels.ravel()
    values, first = np.unique(flat, return_index=True)
    return [int(v) for v, _ in sorted(zip(values, first), key=lambda item: item[1]) if v > 0]


def canonical_labels(li: LabelImage) -> LabelImage:
    """Renumber ids 1..N by the row-major position of each instance's first pixel."""
    order = _first_seen_order(li)
    lookup = np.zeros(int(li.labels.max()) + 1, dtype=np.int64)
    for new_id, old_id in enumerate(order, start=1):
        lookup[old_id] = new_id
    return LabelImage(lookup[li.labels])


def connected_components(mask: BinaryMask, connectivity: int = 8) -> list[BinaryMask]:
    """Split ``mask`` into connected pieces, largest first.

    Ties on area are ordered by the row-major position of each piece's first pixel.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = FOUR_CONNECTED if connectivity == 4 else EIGHT_CONNECTED
    labeled, count = ndimage.label(mask.bits, structure=structure)
    if count == 0:
        return []
    areas = np.bincount(labeled.ravel(), minlength=count + 1)
    # ndimage.label numbers components in raster order of their first pixel.
    order = sorted(range(1, count + 1), key=lambda label: (-int(areas[label]), label))
    return [BinaryMask(labeled == label) for label in order]


def component_labels(mask: BinaryMask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    structure = FOUR_CONNECTED if connectivity == 4 else EIGHT_CONNECTED
    labeled, count = ndimage.label(mask.bits, structure=structure)
    return labeled, int(count)


def boundary(mask: BinaryMask) -> BinaryMask:
    """Mask pixels with a 4-neighbour outside the mask; the image border counts as outside."""
    if mask.is_empty:
        return BinaryMask.empty(*mask.shape)
    interior = ndimage.binary_erosion(mask.bits, structure=FOUR_CONNECTED, border_value=0)
    return BinaryMask(mask.bits & ~interior)


def distance_to(mask: BinaryMask) -> np.ndarray:
    """Euclidean distance from every pixel to the nearest pixel of ``mask``."""
    if mask.is_empty:
        raise EmptyMask("distance to an empty mask is undefined")
    return ndimage.distance_transform_edt(~mask.bits)


def set_distance(a: BinaryMask, b: BinaryMask) -> float:
    """Minimum Euclidean distance between a pixel of ``a`` and a pixel of ``b``."""
    if a.is_empty or b.is_empty:
        raise EmptyMask("set distance needs two non-empty masks")
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask frames differ: {a.shape} vs {b.shape}")
    return float(distance_to(a)[b.bits].min())


def within_distance(distances: np.ndarray, radius: float) -> np.ndarray:
    return distances <= radius + _DISTANCE_EPS


def dilate(mask: BinaryMask, radius: float) -> BinaryMask:
    """Pixels within Euclidean distance ``radius`` of ``mask``."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0 or mask.is_empty:
        return mask
    return BinaryMask(within_distance(distance_to(mask), radius))


def extract_instances(li: LabelImage) -> dict[int, BinaryMask]:
    return {label: li.mask(label) for label in li.ids()}


def compose_instances(shape: tuple[int, int], instances: Mapping[int, BinaryMask]) -> LabelImage:
    """Inverse of :func:`extract_instances`; overlapping masks are rejected."""
    labels = np.zeros(shape, dtype=np.int64)
    for label, mask in instances.items():
        if label <= 0:
            raise InvalidPayload(f"instance labels must be positive, got {label}")
        if mask.shape != tuple(shape):
            raise DimensionMismatch(f"mask frame {mask.shape} does not match {shape}")
        if np.any(labels[mask.bits] != 0):
            raise InvalidPayload(f"instance {label} overlaps another instance")
        labels[mask.bits] = label
    return LabelImage(labels)


def union_all(shape: tuple[int, int], masks: Iterable[BinaryMask]) -> BinaryMask:
    bits = np.zeros(shape, dtype=bool)
    for mask in masks:
        bits |= mask.bits
    return BinaryMask(bits)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(a.bits & b.bits)) / float(union)
