"""Budgeted sample-tree search over segmentation graphs.

Each expansion iteration visits the current leaves and tries ``B`` random
perturbations per leaf. A child is admitted only when its score strictly
beats its parent's, so scores increase along every root-to-leaf path. The
search stops early, keeping everything found so far, as soon as admitting a
child would push the stored graphs past the node or edge budget.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from segrefine.errors import DimensionMismatch
from segrefine.geometry.masks import LabelImage
from segrefine.graph.features import HandcraftedEncoder
from segrefine.graph.seg_graph import SegGraph, build_graph, graph_to_labels
from segrefine.models.config import EngineConfig
from segrefine.sampling.operators import Perturbation
from segrefine.sampling.proposals import ProposalEngine
from segrefine.scene.io import Scene
from segrefine.scoring.scorers import GraphScorer
from segrefine.search.uncertainty import ContourUncertainty, contour_uncertainty

logger = logging.getLogger(__name__)

# Redraws of the operation kind when the drawn kind has no valid proposal.
OPERATION_TRIES = 4


@dataclass(frozen=True, eq=False)
class TreeNode:
    graph: SegGraph
    score: float
    parent: int | None
    perturbation: Perturbation | None
    depth: int


class SampleTree:
    root = 0

    def __init__(
        self,
        root: SegGraph,
        root_score: float,
        *,
        max_graph_nodes: int = 350,
        max_graph_edges: int = 1750,
        branching: int = 3,
    ) -> None:
        self.max_graph_nodes = max_graph_nodes
        self.max_graph_edges = max_graph_edges
        self.branching = branching
        self.nodes: list[TreeNode] = [TreeNode(root, float(root_score), None, None, 0)]
        self.children: list[list[int]] = [[]]
        self.total_graph_nodes = root.node_count
        self.total_graph_edges = root.directed_edge_count
        self.exhausted = False

    def __len__(self) -> int:
        return len(self.nodes)

    def fits(self, graph: SegGraph) -> bool:
        return (
            self.total_graph_nodes + graph.node_count <= self.max_graph_nodes
            and self.total_graph_edges + graph.directed_edge_count <= self.max_graph_edges
        )

    def add(self, graph: SegGraph, score: float, parent: int, perturbation: Perturbation | None) -> int:
        if len(self.children[parent]) >= self.branching:
            raise ValueError(f"tree node {parent} already has {self.branching} children")
        index = len(self.nodes)
        self.nodes.append(TreeNode(graph, float(score), parent, perturbation, self.nodes[parent].depth + 1))
        self.children.append([])
        self.children[parent].append(index)
        self.total_graph_nodes += graph.node_count
        self.total_graph_edges += graph.directed_edge_count
        return index

    def leaves(self) -> list[int]:
        return [index for index, kids in enumerate(self.children) if not kids]

    def best(self) -> int:
        """Index of the highest score; the earliest wins ties."""
        scores = [node.score for node in self.nodes]
        return int(np.argmax(scores))

    def path_to(self, index: int) -> list[int]:
        """Tree indices from the root down to ``index``."""
        path = [index]
        while self.nodes[path[-1]].parent is not None:
            path.append(self.nodes[path[-1]].parent)  # type: ignore[arg-type]
        return path[::-1]

    @property
    def depth(self) -> int:
        return max(node.depth for node in self.nodes)

    def operation_tally(self) -> dict[str, int]:
        tally = Counter(
            node.perturbation.kind.value for node in self.nodes if node.perturbation is not None
        )
        return dict(sorted(tally.items()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "root": self.root,
            "best": self.best(),
            "best_path": self.path_to(self.best()),
            "exhausted": self.exhausted,
            "budget": {
                "max_graph_nodes": self.max_graph_nodes,
                "max_graph_edges": self.max_graph_edges,
                "graph_nodes": self.total_graph_nodes,
                "graph_edges": self.total_graph_edges,
            },
            "nodes": [
                {
                    "index": index,
                    "parent": node.parent,
                    "depth": node.depth,
                    "score": node.score,
                    "instances": len(node.graph.instance_ids),
                    "children": list(self.children[index]),
                    "perturbation": node.perturbation.describe() if node.perturbation else None,
                }
                for index, node in enumerate(self.nodes)
            ],
        }


@dataclass(frozen=True)
class TreeStats:
    depth: int
    node_count: int
    operations: dict[str, int] = field(default_factory=dict)
    exhausted: bool = False

    @classmethod
    def of(cls, tree: SampleTree) -> "TreeStats":
        return cls(tree.depth, len(tree), tree.operation_tally(), tree.exhausted)


@dataclass(frozen=True, eq=False)
class RefinementResult:
    best_labels: LabelImage
    best_score: float
    initial_score: float
    tree_stats: TreeStats
    uncertainty: ContourUncertainty
    tree: SampleTree


def root_graph(scene: Scene, labels: LabelImage, config: EngineConfig) -> SegGraph:
    if labels.shape != scene.shape:
        raise DimensionMismatch(f"labels {labels.shape} do not match scene {scene.shape}")
    return build_graph(
        scene,
        labels,
        config.edge_threshold,
        encoder=HandcraftedEncoder(config.node_dim),
        edge_dim=config.edge_dim,
    )


def _draw_perturbation(
    engine: ProposalEngine, graph: SegGraph, config: EngineConfig, rng: np.random.Generator
) -> tuple[SegGraph, Perturbation] | None:
    kinds = config.operation_kinds
    for _ in range(OPERATION_TRIES):
        kind = kinds[int(rng.integers(len(kinds)))]
        outcome = engine.sample(graph, kind, rng)
        if outcome is not None:
            return outcome
    return None


def expand(
    tree: SampleTree,
    engine: ProposalEngine,
    scorer: GraphScorer,
    config: EngineConfig,
    rng: np.random.Generator,
) -> SampleTree:
    """Run ``config.K`` expansion iterations in place; returns ``tree``."""
    always = config.admission == "always"
    for iteration in range(config.K):
        admitted = 0
        for leaf in tree.leaves():
            parent = tree.nodes[leaf]
            for _ in range(config.B):
                outcome = _draw_perturbation(engine, parent.graph, config, rng)
                if outcome is None:
                    continue
                child, perturbation = outcome
                score = scorer(child)
                if not (always or score > parent.score):
                    continue
                if not tree.fits(child):
                    tree.exhausted = True
                    logger.warning(
                        "Graph budget reached after %d tree nodes (%d nodes, %d edges stored)",
                        len(tree),
                        tree.total_graph_nodes,
                        tree.total_graph_edges,
                    )
                    return tree
                tree.add(child, score, leaf, perturbation)
                admitted += 1
        logger.debug("Iteration %d admitted %d children", iteration + 1, admitted)
    return tree


def refine(
    scene: Scene,
    initial_labels: LabelImage,
    config: EngineConfig,
    rng: np.random.Generator,
    scorer: GraphScorer,
    *,
    engine: ProposalEngine | None = None,
) -> RefinementResult:
    root = root_graph(scene, initial_labels, config)
    initial_score = scorer(root)
    tree = SampleTree(
        root,
        initial_score,
        max_graph_nodes=config.m_n,
        max_graph_edges=config.m_e,
        branching=config.B,
    )
    expand(tree, engine or ProposalEngine(config), scorer, config, rng)
    best = tree.nodes[tree.best()]
    stats = TreeStats.of(tree)
    logger.info(
        "Sample tree: %d nodes, depth %d, score %.4f -> %.4f, operations %s",
        stats.node_count,
        stats.depth,
        initial_score,
        best.score,
        stats.operations,
    )
    return RefinementResult(
        best_labels=graph_to_labels(best.graph),
        best_score=best.score,
        initial_score=initial_score,
        tree_stats=stats,
        uncertainty=contour_uncertainty(tree),
        tree=tree,
    )
