from __future__ import annotations

import numpy as np
import pytest

from segrefine.errors import CorruptEncoding, DimensionMismatch, EmptyMask, InvalidPayload
from segrefine.geometry.contours import contour_mask, trace_contour
from segrefine.geometry.masks import (
    BinaryMask,
    LabelImage,
    boundary,
    canonical_labels,
    compose_instances,
    connected_components,
    dilate,
    extract_instances,
    iou,
    same_partition,
    set_distance,
    union_all,
)
from segrefine.geometry.rle import mask_to_rle, rle_to_mask

from tests.conftest import rect_mask


def test_binary_mask_is_read_only() -> None:
    mask = rect_mask((4, 4), 0, 0, 2, 2)
    with pytest.raises(ValueError):
        mask.bits[0, 0] = False
    assert mask.area == 4
    assert mask.bbox() == (0, 0, 1, 1)


def test_binary_mask_rejects_non_2d() -> None:
    with pytest.raises(DimensionMismatch):
        BinaryMask(np.zeros(5, dtype=bool))


def test_bbox_of_empty_mask_raises() -> None:
    with pytest.raises(EmptyMask):
        BinaryMask.empty(3, 3).bbox()


def test_set_operations_require_same_frame() -> None:
    with pytest.raises(DimensionMismatch):
        _ = BinaryMask.empty(3, 3) | BinaryMask.empty(4, 4)


def test_label_image_rejects_negative_ids() -> None:
    with pytest.raises(InvalidPayload):
        LabelImage(np.array([[0, -1]]))


def test_connected_components_largest_first() -> None:
    bits = np.zeros((6, 10), dtype=bool)
    bits[0:2, 0:2] = True
    bits[3:6, 5:9] = True
    pieces = connected_components(BinaryMask(bits))
    assert [piece.area for piece in pieces] == [12, 4]


def test_connected_components_diagonal_depends_on_connectivity() -> None:
    mask = BinaryMask.from_pixels(3, 3, [(0, 0), (1, 1)])
    assert len(connected_components(mask, connectivity=8)) == 1
    assert len(connected_components(mask, connectivity=4)) == 2


def test_boundary_of_square_is_its_ring() -> None:
    mask = rect_mask((8, 8), 2, 2, 6, 6)
    ring = boundary(mask)
    assert ring.area == 12
    assert not ring.bits[3, 3]


def test_boundary_counts_image_border_as_outside() -> None:
    assert boundary(BinaryMask.full(3, 3)).area == 8


def test_set_distance_between_squares(two_squares) -> None:
    image = LabelImage(two_squares)
    assert set_distance(image.mask(1), image.mask(2)) == pytest.approx(4.0)


def test_set_distance_of_single_pixels() -> None:
    first = BinaryMask.from_pixels(5, 5, [(0, 0)])
    assert set_distance(first, BinaryMask.from_pixels(5, 5, [(3, 4)])) == pytest.approx(5.0)
    assert set_distance(first, BinaryMask.from_pixels(5, 5, [(0, 1)])) == pytest.approx(1.0)


def _random_mask(rng: np.random.Generator, shape: tuple[int, int], density: float) -> BinaryMask:
    bits = rng.random(shape) < density
    if not bits.any():
        bits[tuple(rng.integers(0, s) for s in shape)] = True
    return BinaryMask(bits)


def _pairwise_minimum(a: BinaryMask, b: BinaryMask) -> float:
    pa, pb = a.pixels().astype(np.float64), b.pixels().astype(np.float64)
    gaps = pa[:, None, :] - pb[None, :, :]
    return float(np.sqrt((gaps**2).sum(axis=2)).min())


@pytest.mark.parametrize("seed", range(25))
def test_set_distance_matches_pairwise_enumeration(seed: int) -> None:
    rng = np.random.default_rng(seed)
    shape = (int(rng.integers(3, 16)), int(rng.integers(3, 16)))
    a, b = _random_mask(rng, shape, 0.08), _random_mask(rng, shape, 0.08)
    expected = _pairwise_minimum(a, b)
    assert set_distance(a, b) == pytest.approx(expected)
    assert set_distance(b, a) == pytest.approx(expected)


@pytest.mark.parametrize("seed", range(15))
def test_dilation_reaches_exactly_the_masks_within_radius(seed: int) -> None:
    rng = np.random.default_rng(100 + seed)
    a, b = _random_mask(rng, (14, 14), 0.05), _random_mask(rng, (14, 14), 0.05)
    distance = set_distance(a, b)
    for radius in (0, 0.5, 1, 1.5, 2, 2.9, 3, 4.2, 6):
        touches = bool(np.any(dilate(a, radius).bits & b.bits))
        assert touches == (distance <= radius + 1e-9), radius


def test_dilation_grows_with_radius() -> None:
    mask = _random_mask(np.random.default_rng(7), (12, 12), 0.05)
    previous = mask
    for radius in (0.5, 1, 1.5, 2.5, 4):
        grown = dilate(mask, radius)
        assert np.all(grown.bits[previous.bits])
        previous = grown


def test_dilate_uses_euclidean_radius() -> None:
    point = BinaryMask.from_pixels(9, 9, [(4, 4)])
    grown = dilate(point, 1)
    assert grown.area == 5
    assert dilate(point, 1.5).area == 9
    assert dilate(point, 0) == point


def test_extract_then_compose_restores_labels(two_squares) -> None:
    image = LabelImage(two_squares)
    assert compose_instances(image.shape, extract_instances(image)) == image


def test_compose_rejects_overlap() -> None:
    mask = rect_mask((4, 4), 0, 0, 2, 2)
    with pytest.raises(InvalidPayload):
        compose_instances((4, 4), {1: mask, 2: mask})


def test_union_and_iou() -> None:
    a = rect_mask((4, 4), 0, 0, 2, 2)
    b = rect_mask((4, 4), 0, 1, 2, 3)
    assert union_all((4, 4), [a, b]).area == 6
    assert iou(a, b) == pytest.approx(2 / 6)
    assert iou(BinaryMask.empty(2, 2), BinaryMask.empty(2, 2)) == 0.0


def test_same_partition_ignores_id_values() -> None:
    a = LabelImage(np.array([[1, 1, 0], [2, 2, 0]]))
    b = LabelImage(np.array([[7, 7, 0], [3, 3, 0]]))
    c = LabelImage(np.array([[1, 1, 0], [1, 2, 0]]))
    assert same_partition(a, b)
    assert not same_partition(a, c)
    assert canonical_labels(b) == a


def test_relabeled_keeps_ascending_order() -> None:
    image = LabelImage(np.array([[9, 4, 0]]))
    assert image.relabeled() == LabelImage(np.array([[2, 1, 0]]))


def test_trace_contour_of_square_visits_ring() -> None:
    mask = rect_mask((6, 6), 1, 1, 4, 4)
    contour = trace_contour(mask)
    assert set(contour.unique_points()) == set(map(tuple, boundary(mask).pixels().tolist()))
    assert contour.points[0] == (1, 1)


def test_contour_mask_of_single_pixel() -> None:
    mask = BinaryMask.from_pixels(3, 3, [(1, 1)])
    assert contour_mask(mask) == mask


def test_rle_known_encoding() -> None:
    mask = BinaryMask(np.array([[0, 1, 1], [1, 0, 0]], dtype=bool))
    assert mask_to_rle(mask) == "2 3"
    assert mask_to_rle(BinaryMask.empty(2, 2)) == ""
    assert rle_to_mask("2 3", 2, 3) == mask


@pytest.mark.parametrize("encoded", ["1", "x 2", "5 10"])
def test_rle_rejects_corrupt_runs(encoded: str) -> None:
    with pytest.raises(CorruptEncoding):
        rle_to_mask(encoded, 2, 3)
