"""Graph scorers used by the sample tree."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

from segrefine.errors import ProviderUnavailable
from segrefine.evaluation.metrics import oracle_score
from segrefine.geometry.masks import LabelImage
from segrefine.graph.seg_graph import SegGraph, graph_to_labels
from segrefine.models.config import EngineConfig
from segrefine.scoring.model_io import load_model
from segrefine.scoring.sgs_net import ScoreModel, score_graph

logger = logging.getLogger(__name__)


class GraphScorer(Protocol):
    name: str

    def __call__(self, graph: SegGraph) -> float: ...


@dataclass(frozen=True, eq=False)
class SgsNetScorer:
    model: ScoreModel
    name: str = "model"

    def __call__(self, graph: SegGraph) -> float:
        return score_graph(graph, self.model)


@dataclass(frozen=True, eq=False)
class OracleScorer:
    """Scores a graph against known ground-truth labels."""

    gt: LabelImage
    name: str = "oracle"

    def __call__(self, graph: SegGraph) -> float:
        return oracle_score(graph_to_labels(graph), self.gt)


@dataclass(frozen=True)
class ConstantScorer:
    value: float = 0.5
    name: str = "constant"

    def __call__(self, graph: SegGraph) -> float:
        return self.value


def make_scorer(config: EngineConfig, gt: LabelImage | None = None) -> GraphScorer:
    if config.scorer == "constant":
        return ConstantScorer()
    if config.scorer == "oracle":
        if gt is None:
            raise ProviderUnavailable("the oracle scorer needs ground-truth labels")
        return OracleScorer(gt)
    model = load_model(config.model_path, expected_dims=(config.node_dim, config.edge_dim))
    logger.info("Loaded score model with %d layers from %s", model.num_layers, config.model_path)
    return SgsNetScorer(model)
