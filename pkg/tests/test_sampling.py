from __future__ import annotations

import numpy as np
import pytest

from segrefine.errors import (
    DegeneratePath,
    InvalidPayload,
    NotNeighbors,
    NoPositiveWeight,
    ProviderUnavailable,
    UnknownNode,
)
from segrefine.geometry.masks import BinaryMask, LabelImage, boundary, iou
from segrefine.graph.seg_graph import build_graph
from segrefine.models.config import CorruptionConfig, EngineConfig, OperationKind
from segrefine.sampling.operators import (
    Perturbation,
    apply_delete,
    apply_merge,
    apply_split,
    merge_score,
    split_pieces,
)
from segrefine.sampling.proposals import ProposalEngine, propose_adds
from segrefine.sampling.providers import (
    BoundaryMap,
    DepthGradientBoundary,
    GroundTruthBoundary,
    GroundTruthDelete,
    HeuristicDelete,
    delete_score,
)
from segrefine.sampling.split import SplitProposal, minimum_cost_path, path_cost, pixel_costs, sample_split
from segrefine.scene.corruption import corrupt_segmentation
from segrefine.scene.generator import generate_scene

from tests.conftest import make_scene, rect_mask, sweep_count


def test_ground_truth_boundary_on_exact_instance_is_zero(two_rectangles) -> None:
    scene = make_scene(two_rectangles)
    bmap = GroundTruthBoundary().boundary_map(scene, scene.labels.mask(1))
    assert not bmap.probs.any()


def test_ground_truth_boundary_marks_shared_seam(two_rectangles) -> None:
    scene = make_scene(two_rectangles)
    union = scene.labels.foreground()
    bmap = GroundTruthBoundary().boundary_map(scene, union)
    cols = np.flatnonzero(bmap.probs.any(axis=0))
    assert cols.tolist() == [14, 15, 16, 17]
    assert set(np.unique(bmap.probs)) == {0.0, 1.0}


def test_ground_truth_boundary_needs_labels(two_rectangles) -> None:
    scene = make_scene(two_rectangles, with_truth=False)
    with pytest.raises(ProviderUnavailable):
        GroundTruthBoundary().boundary_map(scene, rect_mask(scene.shape, 0, 0, 4, 4))


def test_depth_gradient_on_constant_depth_is_zero() -> None:
    scene = make_scene(np.zeros((10, 10), dtype=np.int64))
    bmap = DepthGradientBoundary().boundary_map(scene, BinaryMask.full(10, 10))
    assert not bmap.probs.any()


def test_depth_gradient_marks_depth_step(two_rectangles) -> None:
    scene = make_scene(two_rectangles, heights={1: 0.05, 2: 0.10})
    bmap = DepthGradientBoundary(scale=0.02).boundary_map(scene, scene.labels.foreground())
    assert bmap.probs[15, 15] == 1.0
    assert bmap.probs[15, 16] == 1.0
    assert bmap.probs[15, 10] == 0.0


def test_boundary_map_rejects_out_of_range() -> None:
    with pytest.raises(InvalidPayload):
        BoundaryMap(np.full((2, 2), 1.5))


def test_sample_split_without_weight_raises() -> None:
    mask = rect_mask((12, 12), 2, 2, 10, 10)
    with pytest.raises(NoPositiveWeight):
        sample_split(mask, BoundaryMap(np.zeros((12, 12))), np.random.default_rng(0))


def test_minimum_cost_path_follows_confident_line() -> None:
    mask = BinaryMask.full(5, 7)
    probs = np.zeros((5, 7))
    probs[:, 3] = 1.0
    path = minimum_cost_path(mask, probs, (0, 3), (4, 3))
    assert path == [(row, 3) for row in range(5)]


def test_minimum_cost_path_rejects_disconnected_endpoints() -> None:
    mask = BinaryMask.from_pixels(3, 5, [(1, 0), (1, 4)])
    with pytest.raises(DegeneratePath):
        minimum_cost_path(mask, np.zeros((3, 5)), (1, 0), (1, 4))


def test_minimum_cost_path_breaks_ties_by_pixel_order() -> None:
    mask = BinaryMask.full(2, 3)
    probs = np.full((2, 3), 0.5)
    assert minimum_cost_path(mask, probs, (0, 0), (1, 2)) == [(0, 0), (0, 1), (1, 2)]
    assert minimum_cost_path(mask, probs, (1, 2), (0, 0)) == [(1, 2), (0, 1), (0, 0)]


def _mask_neighbours(mask: BinaryMask, pixel: tuple[int, int]) -> list[tuple[int, int]]:
    row, col = pixel
    height, width = mask.shape
    return [
        (row + d_row, col + d_col)
        for d_row in (-1, 0, 1)
        for d_col in (-1, 0, 1)
        if (d_row or d_col)
        and 0 <= row + d_row < height
        and 0 <= col + d_col < width
        and mask.bits[row + d_row, col + d_col]
    ]


def _simple_paths(mask: BinaryMask, start: tuple[int, int], end: tuple[int, int]) -> list[list[tuple[int, int]]]:
    found, stack = [], [[start]]
    while stack:
        path = stack.pop()
        if path[-1] == end:
            found.append(path)
            continue
        stack.extend(path + [step] for step in _mask_neighbours(mask, path[-1]) if step not in path)
    return found


def _random_endpoints(rng: np.random.Generator, mask: BinaryMask) -> tuple[tuple[int, int], tuple[int, int]]:
    pixels = [tuple(int(v) for v in pixel) for pixel in mask.pixels()]
    first, second = rng.choice(len(pixels), size=2, replace=False)
    return pixels[int(first)], pixels[int(second)]


@pytest.mark.parametrize("seed", range(30))
def test_minimum_cost_path_matches_path_enumeration(seed: int) -> None:
    rng = np.random.default_rng(seed)
    shape = (3, 3) if seed % 3 else (2, 4)
    bits = rng.random(shape) < 0.8
    bits.flat[rng.choice(bits.size, size=2, replace=False)] = True
    mask = BinaryMask(bits)
    probs = rng.choice([0.5] if seed % 2 else [0.2, 0.5, 0.8], size=shape)
    start, end = _random_endpoints(rng, mask)
    paths = _simple_paths(mask, start, end)
    if not paths:
        with pytest.raises(DegeneratePath):
            minimum_cost_path(mask, probs, start, end)
        return
    costs = [path_cost(path, probs) for path in paths]
    best = min(costs)
    tied = [path for path, cost in zip(paths, costs) if cost <= best * (1 + 1e-9)]
    expected = min(tied, key=lambda path: tuple(reversed(path)))
    path = minimum_cost_path(mask, probs, start, end)
    assert path_cost(path, probs) == pytest.approx(best, rel=1e-9)
    assert path == expected


def _relaxed_costs(mask: BinaryMask, probs: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    """Cheapest cost into every pixel, relaxed over all edges until nothing changes."""
    costs = pixel_costs(probs)
    best = np.full(mask.shape, np.inf)
    best[start] = costs[start]
    pixels = [tuple(int(v) for v in pixel) for pixel in mask.pixels()]
    changed = True
    while changed:
        changed = False
        for row, col in pixels:
            for r, c in _mask_neighbours(mask, (row, col)):
                factor = np.sqrt(2.0) if r != row and c != col else 1.0
                candidate = best[r, c] + factor * costs[row, col]
                if candidate < best[row, col] - 1e-12:
                    best[row, col] = candidate
                    changed = True
    return best


@pytest.mark.parametrize("seed", range(20))
def test_minimum_cost_path_matches_relaxed_costs(seed: int) -> None:
    rng = np.random.default_rng(500 + seed)
    shape = (int(rng.integers(4, 11)), int(rng.integers(4, 11)))
    mask = BinaryMask(rng.random(shape) < 0.75)
    if mask.area < 2:
        mask = BinaryMask.full(*shape)
    probs = rng.choice([0.2, 0.5, 0.8], size=shape)
    start, end = _random_endpoints(rng, mask)
    expected = _relaxed_costs(mask, probs, start)[end]
    if not np.isfinite(expected):
        with pytest.raises(DegeneratePath):
            minimum_cost_path(mask, probs, start, end)
        return
    path = minimum_cost_path(mask, probs, start, end)
    assert (path[0], path[-1]) == (start, end)
    assert len(set(path)) == len(path)
    assert all(mask.bits[pixel] for pixel in path)
    assert all(max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1 for a, b in zip(path, path[1:]))
    assert path_cost(path, probs) == pytest.approx(expected, rel=1e-9)


def test_sample_split_recovers_merged_rectangles(two_rectangles) -> None:
    scene = make_scene(two_rectangles)
    merged = scene.labels.foreground()
    bmap = GroundTruthBoundary().boundary_map(scene, merged)
    successes = 0
    for seed in range(10):
        proposal = sample_split(merged, bmap, np.random.default_rng(seed), mask_id=1)
        assert len(proposal.path) >= 2
        assert 0.0 <= proposal.score <= 1.0
        try:
            pieces = split_pieces(merged, proposal.path_mask(merged.shape))
        except DegeneratePath:
            continue
        successes += 1
        assert len(pieces) == 2
        assert sum(piece.area for piece in pieces) == merged.area
        best = [max(iou(piece, scene.labels.mask(label)) for piece in pieces) for label in (1, 2)]
        assert min(best) >= 0.7
    assert successes > 0


def test_split_pieces_of_square_are_near_halves() -> None:
    mask = rect_mask((10, 11), 0, 0, 10, 11)
    path = rect_mask((10, 11), 0, 5, 10, 6)
    pieces = split_pieces(mask, path)
    areas = sorted(piece.area for piece in pieces)
    assert sum(areas) == 110
    assert areas[1] - areas[0] <= path.area


def test_split_pieces_rejects_non_separating_path() -> None:
    mask = rect_mask((10, 10), 0, 0, 10, 10)
    with pytest.raises(DegeneratePath):
        split_pieces(mask, rect_mask((10, 10), 0, 5, 5, 6))


def test_apply_split_increases_node_count(two_squares) -> None:
    scene = make_scene(two_squares)
    graph = build_graph(scene, scene.labels)
    path = tuple((row, 9) for row in range(5, 15))
    child = apply_split(graph, SplitProposal(path=path, score=1.0, mask_id=1))
    assert len(child.instance_ids) == 3
    assert child.mask(child.background) == graph.mask(graph.background)
    child.validate()


def test_merge_score_limits() -> None:
    left = rect_mask((6, 8), 1, 1, 5, 4)
    right = rect_mask((6, 8), 1, 4, 5, 7)
    assert merge_score(BoundaryMap(np.zeros((6, 8))), left, right) == 1.0
    seam = (boundary(left) | boundary(right)).bits.astype(np.float64)
    assert merge_score(BoundaryMap(seam), left, right) == pytest.approx(0.0)


def test_merge_score_with_uniform_probability() -> None:
    left = rect_mask((6, 8), 1, 1, 5, 4)
    right = rect_mask((6, 8), 1, 4, 5, 7)
    union = left | right
    probs = np.where(union.bits, 0.3, 0.0)
    seam = (boundary(left) | boundary(right)).area
    expected = 1.0 - seam / union.area
    assert merge_score(BoundaryMap(probs), left, right) == pytest.approx(expected)


def test_ground_truth_delete_scores() -> None:
    labels = np.zeros((20, 20), dtype=np.int64)
    labels[5:15, 5:15] = 1
    scene = make_scene(labels)
    graph = build_graph(scene, scene.labels)
    provider = GroundTruthDelete()
    assert provider.score_mask(graph, scene.labels.mask(1)) == 0.0
    assert provider.score_mask(graph, rect_mask((20, 20), 0, 0, 3, 3)) == 1.0
    half = rect_mask((20, 20), 5, 10, 15, 20)
    assert provider.score_mask(graph, half) == pytest.approx(1.0 - 50 / 150)
    assert delete_score(graph, 1, provider) == 0.0
    with pytest.raises(InvalidPayload):
        delete_score(graph, graph.background, provider)


def test_heuristic_delete_prefers_raised_objects() -> None:
    labels = np.zeros((30, 30), dtype=np.int64)
    labels[5:12, 5:12] = 1
    scene = make_scene(labels, heights={1: 0.1})
    graph = build_graph(scene, scene.labels)
    provider = HeuristicDelete()
    raised = provider.score_mask(graph, scene.labels.mask(1))
    flat = provider.score_mask(graph, rect_mask((30, 30), 18, 18, 25, 25))
    assert 0.0 <= raised < flat <= 1.0


def test_propose_adds_finds_uncovered_object(two_squares) -> None:
    scene = make_scene(two_squares)
    only_first = LabelImage(np.where(two_squares == 1, 1, 0))
    graph = build_graph(scene, only_first)
    proposals = propose_adds(graph, scene.foreground, GroundTruthDelete(), min_add_area=10)
    assert len(proposals) == 1
    assert proposals[0].payload == scene.labels.mask(2)
    assert proposals[0].score == 1.0


def test_propose_adds_empty_when_covered_or_small(two_squares) -> None:
    scene = make_scene(two_squares)
    graph = build_graph(scene, scene.labels)
    assert propose_adds(graph, scene.foreground, GroundTruthDelete()) == []
    partial = build_graph(scene, LabelImage(np.where(two_squares == 1, 1, 0)))
    assert propose_adds(partial, scene.foreground, GroundTruthDelete(), min_add_area=101) == []


def test_apply_merge_and_delete(two_squares) -> None:
    scene = make_scene(two_squares)
    graph = build_graph(scene, scene.labels)
    merged = apply_merge(graph, (1, 2))
    assert len(merged.instance_ids) == 1
    merged.validate()
    deleted = apply_delete(graph, 1)
    assert deleted.instance_ids == [2]
    with pytest.raises(UnknownNode):
        apply_delete(graph, 9)


def test_apply_merge_requires_neighbours() -> None:
    labels = np.zeros((20, 60), dtype=np.int64)
    labels[5:10, 2:7] = 1
    labels[5:10, 40:45] = 2
    scene = make_scene(labels)
    graph = build_graph(scene, scene.labels)
    with pytest.raises(NotNeighbors):
        apply_merge(graph, (1, 2))


def test_perturbation_validates_payload_and_score() -> None:
    with pytest.raises(InvalidPayload):
        Perturbation(OperationKind.DELETE, 1, 1.5)
    with pytest.raises(InvalidPayload):
        Perturbation(OperationKind.MERGE, 3, 0.5)
    assert Perturbation(OperationKind.MERGE, (1, 2), 0.5).describe() == {
        "kind": "merge",
        "score": 0.5,
        "nodes": [1, 2],
    }


def test_engine_returns_none_without_confident_proposals(two_squares) -> None:
    scene = make_scene(two_squares)
    graph = build_graph(scene, scene.labels)
    engine = ProposalEngine(EngineConfig())
    assert engine.sample(graph, OperationKind.DELETE, np.random.default_rng(0)) is None


def test_engine_samples_add_for_missing_object(two_squares) -> None:
    scene = make_scene(two_squares)
    graph = build_graph(scene, LabelImage(np.where(two_squares == 1, 1, 0)))
    engine = ProposalEngine(EngineConfig(min_add_area=10))
    sampled = engine.sample(graph, OperationKind.ADD, np.random.default_rng(0))
    assert sampled is not None
    child, perturbation = sampled
    assert perturbation.kind is OperationKind.ADD
    assert len(child.instance_ids) == 2
    child.validate()


def test_engine_merge_proposal_for_split_object(two_rectangles) -> None:
    gt = np.where(two_rectangles > 0, 1, 0)
    scene = make_scene(gt)
    graph = build_graph(scene, LabelImage(two_rectangles))
    proposals = ProposalEngine(EngineConfig()).propose(graph, OperationKind.MERGE, np.random.default_rng(0))
    assert [item.payload for item in proposals] == [(1, 2)]
    assert proposals[0].score == 1.0


def test_perturbation_chains_keep_graph_valid() -> None:
    scene = generate_scene(17)
    assert scene.labels is not None
    labels = corrupt_segmentation(scene.labels, 17)
    engine = ProposalEngine(EngineConfig(proposal_threshold=0.01, min_add_area=10))
    rng = np.random.default_rng(17)
    graph = build_graph(scene, labels)
    for step in range(12):
        kind = list(OperationKind)[step % 4]
        sampled = engine.sample(graph, kind, rng)
        if sampled is not None:
            graph = sampled[0]
            graph.validate()


def _has_inverse(kind: str, seed: int) -> bool | None:
    scene = generate_scene(seed)
    gt = scene.labels
    assert gt is not None
    config = CorruptionConfig(num_corruptions=1, weights={kind: 1.0})
    corrupted = corrupt_segmentation(gt, seed, config)
    if corrupted == gt:
        return None
    graph = build_graph(scene, corrupted)
    engine = ProposalEngine(EngineConfig(min_add_area=1))
    rng = np.random.default_rng(seed)
    gt_masks = [gt.mask(label) for label in gt.ids()]
    if kind == "split":
        for item in engine.propose(graph, OperationKind.MERGE, rng):
            i, j = item.payload
            if graph.mask(i) | graph.mask(j) in gt_masks:
                return True
        return False
    for item in engine.propose(graph, OperationKind.ADD, rng):
        if item.payload in gt_masks:
            return True
    return False


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["split", "delete"])
def test_corruptions_have_confident_inverse(kind: str) -> None:
    outcomes = [_has_inverse(kind, seed) for seed in range(sweep_count(200, 20))]
    decided = [outcome for outcome in outcomes if outcome is not None]
    assert decided
    assert sum(decided) / len(decided) >= 0.9
