"""Segmentation graphs: one node per instance plus a background node.

Instance nodes are joined by an undirected edge when their set distance is at
most ``edge_threshold``. The background node (id 0) never carries edges.
Graphs are immutable; :func:`replace_nodes` derives a new graph and reuses the
features of every untouched node and edge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any, Iterable, Mapping

import numpy as np

from segrefine.errors import DimensionMismatch, InvalidPayload, UnknownNode
from segrefine.geometry.masks import (
    BinaryMask,
    LabelImage,
    distance_to,
    extract_instances,
    set_distance,
    union_all,
    within_distance,
)
from segrefine.geometry.rle import mask_to_rle
from segrefine.graph.features import HandcraftedEncoder, NodeEncoder, encode_edge
from segrefine.scene.io import Scene

logger = logging.getLogger(__name__)

BACKGROUND = 0
EdgeKey = tuple[int, int]


@dataclass(frozen=True)
class GraphContext:
    """What every derived graph needs to re-encode changed nodes."""

    scene: Scene
    encoder: NodeEncoder
    edge_dim: int
    edge_threshold: float


@dataclass(frozen=True, eq=False)
class GraphNode:
    mask: BinaryMask
    features: np.ndarray


def edge_key(i: int, j: int) -> EdgeKey:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True, eq=False)
class SegGraph:
    nodes: Mapping[int, GraphNode]
    edges: Mapping[EdgeKey, np.ndarray]
    context: GraphContext

    @property
    def frame(self) -> tuple[int, int]:
        return self.context.scene.shape

    @property
    def edge_threshold(self) -> float:
        return self.context.edge_threshold

    @property
    def background(self) -> int:
        return BACKGROUND

    @property
    def instance_ids(self) -> list[int]:
        return sorted(node_id for node_id in self.nodes if node_id != BACKGROUND)

    @property
    def node_count(self) -> int:
        """All nodes, background included."""
        return len(self.nodes)

    @property
    def directed_edge_count(self) -> int:
        return 2 * len(self.edges)

    def mask(self, node_id: int) -> BinaryMask:
        if node_id not in self.nodes:
            raise UnknownNode(f"node {node_id} is not in the graph")
        return self.nodes[node_id].mask

    def features(self, node_id: int) -> np.ndarray:
        if node_id not in self.nodes:
            raise UnknownNode(f"node {node_id} is not in the graph")
        return self.nodes[node_id].features

    def instance_masks(self) -> dict[int, BinaryMask]:
        return {node_id: self.nodes[node_id].mask for node_id in self.instance_ids}

    def has_edge(self, i: int, j: int) -> bool:
        return edge_key(i, j) in self.edges

    def neighbors(self, node_id: int) -> list[int]:
        return sorted(b if a == node_id else a for a, b in self.edges if node_id in (a, b))

    def next_node_id(self) -> int:
        return max(self.nodes) + 1

    def validate(self) -> None:
        """Raise InvalidPayload if any structural invariant is broken."""
        height, width = self.frame
        covered = np.zeros((height, width), dtype=np.int64)
        for node_id in self.instance_ids:
            mask = self.nodes[node_id].mask
            if mask.is_empty:
                raise InvalidPayload(f"instance node {node_id} has an empty mask")
            covered += mask.bits
        if np.any(covered > 1):
            raise InvalidPayload("instance masks overlap")
        if BACKGROUND not in self.nodes:
            raise InvalidPayload("background node missing")
        if not np.array_equal(self.nodes[BACKGROUND].mask.bits, covered == 0):
            raise InvalidPayload("background mask is not the complement of the instances")
        for node_id, node in self.nodes.items():
            if not np.all(np.isfinite(node.features)):
                raise InvalidPayload(f"node {node_id} has non-finite features")
        ids = self.instance_ids
        for index, i in enumerate(ids):
            for j in ids[index + 1 :]:
                close = set_distance(self.nodes[i].mask, self.nodes[j].mask) <= self.edge_threshold + 1e-9
                if close != ((i, j) in self.edges):
                    raise InvalidPayload(f"edge ({i}, {j}) disagrees with the distance threshold")
        for (i, j), feats in self.edges.items():
            if i >= j or BACKGROUND in (i, j):
                raise InvalidPayload(f"malformed edge key ({i}, {j})")
            if not np.all(np.isfinite(feats)):
                raise InvalidPayload(f"edge ({i}, {j}) has non-finite features")

    def to_dict(self) -> dict[str, Any]:
        height, width = self.frame
        return {
            "frame": {"height": height, "width": width},
            "edge_threshold": self.edge_threshold,
            "background": BACKGROUND,
            "nodes": [
                {
                    "id": node_id,
                    "area": node.mask.area,
                    "rle": mask_to_rle(node.mask),
                    "features": [float(v) for v in node.features],
                }
                for node_id, node in sorted(self.nodes.items())
            ],
            "edges": [
                {"source": i, "target": j, "features": [float(v) for v in feats]}
                for (i, j), feats in sorted(self.edges.items())
            ],
        }


def _close_pairs(new_id: int, new_mask: BinaryMask, others: Mapping[int, BinaryMask], threshold: float) -> list[int]:
    distances = distance_to(new_mask)
    reach = within_distance(distances, threshold)
    return sorted(node_id for node_id, mask in others.items() if np.any(reach & mask.bits) and node_id != new_id)


def _assemble(
    context: GraphContext,
    instances: Mapping[int, BinaryMask],
    *,
    reuse_nodes: Mapping[int, GraphNode] | None = None,
    reuse_edges: Mapping[EdgeKey, np.ndarray] | None = None,
    background: GraphNode | None = None,
) -> SegGraph:
    scene, encoder = context.scene, context.encoder
    reuse_nodes = reuse_nodes or {}
    reuse_edges = reuse_edges or {}
    nodes: dict[int, GraphNode] = {}

    foreground = union_all(scene.shape, instances.values())
    background_mask = ~foreground
    if background is None or background.mask != background_mask:
        background = GraphNode(
            background_mask, encoder.encode(scene, background_mask, allow_empty=True)
        )
    nodes[BACKGROUND] = background

    fresh: list[int] = []
    for node_id in sorted(instances):
        if node_id in reuse_nodes:
            nodes[node_id] = reuse_nodes[node_id]
        else:
            mask = instances[node_id]
            nodes[node_id] = GraphNode(mask, encoder.encode(scene, mask))
            fresh.append(node_id)

    edges: dict[EdgeKey, np.ndarray] = {
        key: feats for key, feats in reuse_edges.items() if key[0] in nodes and key[1] in nodes
    }
    for node_id in fresh:
        for other in _close_pairs(node_id, instances[node_id], instances, context.edge_threshold):
            key = edge_key(node_id, other)
            if key not in edges:
                edges[key] = encode_edge(
                    scene,
                    instances[key[0]],
                    instances[key[1]],
                    encoder=encoder,
                    edge_dim=context.edge_dim,
                )
    return SegGraph(
        nodes=MappingProxyType(dict(sorted(nodes.items()))),
        edges=MappingProxyType(dict(sorted(edges.items()))),
        context=context,
    )


def build_graph(
    scene: Scene,
    labels: LabelImage,
    edge_threshold: float = 10.0,
    *,
    encoder: NodeEncoder | None = None,
    edge_dim: int = 32,
) -> SegGraph:
    """Node ids 1..N follow the ascending order of the original labels."""
    if labels.shape != scene.shape:
        raise DimensionMismatch(f"labels {labels.shape} do not match scene {scene.shape}")
    context = GraphContext(scene, encoder or HandcraftedEncoder(), edge_dim, float(edge_threshold))
    instances = {
        node_id: mask
        for node_id, mask in enumerate(extract_instances(labels).values(), start=1)
    }
    graph = _assemble(context, instances)
    logger.debug("Built graph with %d instances and %d edges", len(instances), len(graph.edges))
    return graph


def replace_nodes(graph: SegGraph, remove: Iterable[int], add: Iterable[BinaryMask]) -> SegGraph:
    """Drop ``remove`` and insert ``add`` as new nodes with fresh ids."""
    removed = set(remove)
    for node_id in removed:
        if node_id == BACKGROUND or node_id not in graph.nodes:
            raise UnknownNode(f"node {node_id} is not an instance node")
    instances = {node_id: mask for node_id, mask in graph.instance_masks().items() if node_id not in removed}
    next_id = graph.next_node_id()
    for mask in add:
        if mask.shape != graph.frame:
            raise DimensionMismatch(f"mask {mask.shape} does not match frame {graph.frame}")
        if mask.is_empty:
            raise InvalidPayload("cannot insert an empty mask")
        if any(mask.intersects(other) for other in instances.values()):
            raise InvalidPayload("inserted mask overlaps an existing instance")
        instances[next_id] = mask
        next_id += 1
    kept_nodes = {node_id: node for node_id, node in graph.nodes.items() if node_id in instances}
    kept_edges = {key: feats for key, feats in graph.edges.items() if not (set(key) & removed)}
    return _assemble(
        graph.context,
        instances,
        reuse_nodes=kept_nodes,
        reuse_edges=kept_edges,
        background=graph.nodes[BACKGROUND],
    )


def graph_to_labels(graph: SegGraph) -> LabelImage:
    """Instances labelled 1..N in ascending node-id order."""
    labels = np.zeros(graph.frame, dtype=np.int64)
    for rank, node_id in enumerate(graph.instance_ids, start=1):
        labels[graph.nodes[node_id].mask.bits] = rank
    return LabelImage(labels)
