"""Per-pixel contour disagreement across sample-tree leaves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from segrefine.errors import EmptyList
from segrefine.geometry.masks import BinaryMask, boundary, dilate
from segrefine.graph.seg_graph import SegGraph

if TYPE_CHECKING:
    from segrefine.search.sample_tree import SampleTree

MAX_UINT16 = 65535


@dataclass(frozen=True, eq=False)
class ContourUncertainty:
    mean_contour: BinaryMask
    stddev_map: np.ndarray

    @property
    def is_confident(self) -> bool:
        return not np.any(self.stddev_map > 0)

    def mass_near(self, mask: BinaryMask, radius: float) -> float:
        """Sum of the stddev map within ``radius`` pixels of ``mask``."""
        return float(self.stddev_map[dilate(mask, radius).bits].sum())

    def to_uint16(self) -> np.ndarray:
        return np.round(np.clip(self.stddev_map, 0.0, 1.0) * MAX_UINT16).astype(np.uint16)


def contour_indicator(graph: SegGraph) -> np.ndarray:
    """Pixels lying on the contour of any instance of ``graph``.

    Contours come from the 4-neighbour ``boundary`` of each mask rather than
    a traced outline, so the rims of holes are marked too.
    """
    bits = np.zeros(graph.frame, dtype=bool)
    for mask in graph.instance_masks().values():
        bits |= boundary(mask).bits
    return bits


def graphs_uncertainty(graphs: Sequence[SegGraph]) -> ContourUncertainty:
    if not graphs:
        raise EmptyList("contour uncertainty needs at least one graph")
    stack = np.stack([contour_indicator(graph) for graph in graphs])
    return ContourUncertainty(
        mean_contour=BinaryMask(np.all(stack, axis=0)),
        stddev_map=stack.astype(np.float64).std(axis=0),
    )


def contour_uncertainty(tree: "SampleTree") -> ContourUncertainty:
    return graphs_uncertainty([tree.nodes[index].graph for index in tree.leaves()])
