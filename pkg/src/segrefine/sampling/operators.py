"""The four graph perturbations and their scores."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import ndimage

from segrefine.errors import DegeneratePath, InvalidPayload, NotNeighbors, UnknownNode
from segrefine.geometry.masks import BinaryMask, boundary, connected_components
from segrefine.graph.seg_graph import BACKGROUND, SegGraph, replace_nodes
from segrefine.models.config import OperationKind
from segrefine.sampling.providers import BoundaryMap
from segrefine.sampling.split import SplitProposal

logger = logging.getLogger(__name__)

Payload = Union[SplitProposal, tuple[int, int], int, BinaryMask]


@dataclass(frozen=True, eq=False)
class Perturbation:
    kind: OperationKind
    payload: Payload
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise InvalidPayload(f"perturbation score {self.score} outside [0, 1]")
        expected = {
            OperationKind.SPLIT: SplitProposal,
            OperationKind.MERGE: tuple,
            OperationKind.DELETE: int,
            OperationKind.ADD: BinaryMask,
        }[self.kind]
        if not isinstance(self.payload, expected):
            raise InvalidPayload(f"{self.kind.value} needs a {expected.__name__} payload")

    def describe(self) -> dict:
        """JSON-friendly summary used in tree dumps."""
        summary: dict = {"kind": self.kind.value, "score": self.score}
        if isinstance(self.payload, SplitProposal):
            summary["node"] = self.payload.mask_id
            summary["path_length"] = len(self.payload.path)
        elif isinstance(self.payload, tuple):
            summary["nodes"] = list(self.payload)
        elif isinstance(self.payload, BinaryMask):
            summary["area"] = self.payload.area
        else:
            summary["node"] = self.payload
        return summary


def _instance(graph: SegGraph, node_id: int) -> BinaryMask:
    if node_id == BACKGROUND or node_id not in graph.nodes:
        raise UnknownNode(f"node {node_id} is not an instance node")
    return graph.nodes[node_id].mask


def split_pieces(mask: BinaryMask, path: BinaryMask, min_piece_area: int = 4) -> list[BinaryMask]:
    """Pieces of ``mask`` left by cutting along ``path``.

    Pieces are the 4-connected components of ``mask - path`` with at least
    ``min_piece_area`` pixels; path pixels and smaller pieces join the nearest
    surviving piece.
    """
    pieces = [
        piece
        for piece in connected_components(mask - path, connectivity=4)
        if piece.area >= max(1, min_piece_area)
    ]
    if len(pieces) < 2:
        raise DegeneratePath("cutting along the path leaves fewer than two pieces")
    owner = np.zeros(mask.shape, dtype=np.int64)
    for number, piece in enumerate(pieces, start=1):
        owner[piece.bits] = number
    _, (rows, cols) = ndimage.distance_transform_edt(owner == 0, return_indices=True)
    nearest = owner[rows, cols]
    assigned = np.where(mask.bits, nearest, 0)
    return [BinaryMask(assigned == number) for number in range(1, len(pieces) + 1)]


def apply_split(graph: SegGraph, proposal: SplitProposal, *, min_piece_area: int = 4) -> SegGraph:
    mask = _instance(graph, proposal.mask_id)
    pieces = split_pieces(mask, proposal.path_mask(graph.frame), min_piece_area)
    return replace_nodes(graph, [proposal.mask_id], pieces)


def merge_score(bmap_union: BoundaryMap, mask_i: BinaryMask, mask_j: BinaryMask) -> float:
    """1 minus the probability-weighted share of the two masks' boundaries."""
    probs = bmap_union.probs
    total = float(probs.sum())
    if total <= 0.0:
        return 1.0
    seam = (boundary(mask_i) | boundary(mask_j)).bits
    return float(np.clip(1.0 - float(probs[seam].sum()) / total, 0.0, 1.0))


def apply_merge(graph: SegGraph, pair: tuple[int, int]) -> SegGraph:
    i, j = pair
    first, second = _instance(graph, i), _instance(graph, j)
    if not graph.has_edge(i, j):
        raise NotNeighbors(f"nodes {i} and {j} are not neighbours")
    return replace_nodes(graph, [i, j], [first | second])


def apply_delete(graph: SegGraph, node_id: int) -> SegGraph:
    _instance(graph, node_id)
    return replace_nodes(graph, [node_id], [])


def apply_add(graph: SegGraph, mask: BinaryMask) -> SegGraph:
    return replace_nodes(graph, [], [mask])


def apply_perturbation(graph: SegGraph, perturbation: Perturbation, *, min_piece_area: int = 4) -> SegGraph:
    payload = perturbation.payload
    if perturbation.kind is OperationKind.SPLIT:
        return apply_split(graph, payload, min_piece_area=min_piece_area)  # type: ignore[arg-type]
    if perturbation.kind is OperationKind.MERGE:
        return apply_merge(graph, payload)  # type: ignore[arg-type]
    if perturbation.kind is OperationKind.DELETE:
        return apply_delete(graph, payload)  # type: ignore[arg-type]
    return apply_add(graph, payload)  # type: ignore[arg-type]
