"""Scored perturbation proposals for a graph, one operation kind at a time."""

from __future__ import annotations

import logging
import weakref

import numpy as np
import xxhash

from segrefine.errors import DegeneratePath, NoPositiveWeight
from segrefine.geometry.masks import BinaryMask, connected_components, union_all
from segrefine.graph.seg_graph import SegGraph
from segrefine.models.config import EngineConfig, OperationKind
from segrefine.sampling.operators import Perturbation, apply_perturbation, merge_score, split_pieces
from segrefine.sampling.providers import (
    BoundaryMap,
    BoundaryProvider,
    DeleteProvider,
    make_boundary_provider,
    make_delete_provider,
)
from segrefine.sampling.split import sample_split

logger = logging.getLogger(__name__)


def mask_key(mask: BinaryMask) -> tuple[tuple[int, int], int]:
    return (mask.shape, xxhash.xxh64_intdigest(np.packbits(mask.bits).tobytes()))


def propose_adds(
    graph: SegGraph,
    foreground: BinaryMask,
    provider: DeleteProvider,
    add_threshold: float = 0.5,
    *,
    min_add_area: int = 64,
) -> list[Perturbation]:
    """Uncovered foreground components that the delete provider would keep."""
    covered = union_all(graph.frame, graph.instance_masks().values())
    proposals = []
    for component in connected_components(foreground - covered, connectivity=8):
        if component.area < min_add_area:
            continue
        score = provider.score_mask(graph, component)
        if score < add_threshold:
            proposals.append(Perturbation(OperationKind.ADD, component, 1.0 - score))
    return proposals


class ProposalEngine:
    """Generates, filters and applies perturbations under one engine config.

    Boundary maps and delete scores are cached per mask, and deterministic
    proposal lists per graph, since the sample tree queries the same leaves
    repeatedly.
    """

    def __init__(
        self,
        config: EngineConfig,
        boundary_provider: BoundaryProvider | None = None,
        delete_provider: DeleteProvider | None = None,
    ) -> None:
        self.config = config
        self.boundary_provider = boundary_provider or make_boundary_provider(config)
        self.delete_provider = delete_provider or make_delete_provider(config)
        self._maps: dict[tuple, BoundaryMap] = {}
        self._delete_scores: dict[tuple, float] = {}
        self._by_graph: "weakref.WeakKeyDictionary[SegGraph, dict[OperationKind, list[Perturbation]]]" = (
            weakref.WeakKeyDictionary()
        )

    def boundary_map(self, graph: SegGraph, mask: BinaryMask) -> BoundaryMap:
        key = mask_key(mask)
        if key not in self._maps:
            self._maps[key] = self.boundary_provider.boundary_map(graph.context.scene, mask)
        return self._maps[key]

    def delete_score(self, graph: SegGraph, mask: BinaryMask) -> float:
        # Heuristic scores depend on the background descriptor as well.
        key = (mask_key(mask), mask_key(graph.mask(graph.background)))
        if key not in self._delete_scores:
            self._delete_scores[key] = self.delete_provider.score_mask(graph, mask)
        return self._delete_scores[key]

    def split_proposals(self, graph: SegGraph, rng: np.random.Generator) -> list[Perturbation]:
        proposals = []
        for node_id in graph.instance_ids:
            mask = graph.mask(node_id)
            bmap = self.boundary_map(graph, mask)
            for _ in range(self.config.split_attempts):
                try:
                    proposal = sample_split(mask, bmap, rng, self.config.nu, mask_id=node_id)
                    split_pieces(mask, proposal.path_mask(graph.frame), self.config.min_piece_area)
                except NoPositiveWeight:
                    break
                except DegeneratePath:
                    continue
                proposals.append(Perturbation(OperationKind.SPLIT, proposal, proposal.score))
                break
        return proposals

    def merge_proposals(self, graph: SegGraph) -> list[Perturbation]:
        proposals = []
        for i, j in graph.edges:
            first, second = graph.mask(i), graph.mask(j)
            union = first | second
            score = merge_score(self.boundary_map(graph, union), first, second)
            proposals.append(Perturbation(OperationKind.MERGE, (i, j), score))
        return proposals

    def delete_proposals(self, graph: SegGraph) -> list[Perturbation]:
        return [
            Perturbation(OperationKind.DELETE, node_id, self.delete_score(graph, graph.mask(node_id)))
            for node_id in graph.instance_ids
        ]

    def add_proposals(self, graph: SegGraph) -> list[Perturbation]:
        foreground = graph.context.scene.foreground
        if foreground is None:
            return []
        return propose_adds(
            graph,
            foreground,
            _CachedDelete(self),
            self.config.add_threshold,
            min_add_area=self.config.min_add_area,
        )

    def propose(self, graph: SegGraph, kind: OperationKind, rng: np.random.Generator) -> list[Perturbation]:
        """Proposals of ``kind`` scoring at least the proposal threshold."""
        if kind is OperationKind.SPLIT:
            candidates = self.split_proposals(graph, rng)
        else:
            cached = self._by_graph.setdefault(graph, {})
            if kind not in cached:
                if kind is OperationKind.MERGE:
                    cached[kind] = self.merge_proposals(graph)
                elif kind is OperationKind.DELETE:
                    cached[kind] = self.delete_proposals(graph)
                else:
                    cached[kind] = self.add_proposals(graph)
            candidates = cached[kind]
        threshold = self.config.proposal_threshold
        return [item for item in candidates if item.score >= threshold]

    def sample(
        self, graph: SegGraph, kind: OperationKind, rng: np.random.Generator
    ) -> tuple[SegGraph, Perturbation] | None:
        """Pick up to ``proposals_per_op`` proposals, apply one of them uniformly."""
        proposals = self.propose(graph, kind, rng)
        if not proposals:
            return None
        count = min(self.config.proposals_per_op, len(proposals))
        shortlist = rng.choice(len(proposals), size=count, replace=False)
        chosen = proposals[int(shortlist[int(rng.integers(count))])]
        child = apply_perturbation(graph, chosen, min_piece_area=self.config.min_piece_area)
        logger.debug("Applied %s (score %.3f)", kind.value, chosen.score)
        return child, chosen


class _CachedDelete:
    """Routes a provider call through the engine's delete-score cache."""

    def __init__(self, engine: ProposalEngine) -> None:
        self._engine = engine
        self.name = engine.delete_provider.name

    def score_mask(self, graph: SegGraph, mask: BinaryMask) -> float:
        return self._engine.delete_score(graph, mask)
