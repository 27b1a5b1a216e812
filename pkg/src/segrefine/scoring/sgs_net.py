"""Forward pass of the graph scoring network.

Each residual layer updates directed edges, then nodes:

    e'_ij = ReLU(e_ij + phi_e([v_i, v_j, e_ij]))
    v'_i  = ReLU(v_i + phi_v2([mean_j phi_v1([e'_ij, v_j]), v_i]))

and the graph score is ``sigmoid(phi_o([mean(V), mean(E)]))``. Every
undirected edge enters twice, as (i, j) and (j, i). Nodes without edges and
graphs without edges aggregate to zero vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from segrefine.errors import CorruptModel, DimensionMismatch
from segrefine.graph.seg_graph import SegGraph

# Keeps scores strictly inside (0, 1) where the logistic saturates.
_SCORE_EPS = 1e-15


@dataclass(frozen=True, eq=False)
class MlpSpec:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise CorruptModel("an MLP needs one bias per weight matrix")
        weights = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        for index, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise CorruptModel(f"layer {index} has weight {w.shape} and bias {b.shape}")
            if index and weights[index - 1].shape[1] != w.shape[0]:
                raise CorruptModel(f"layer {index} input {w.shape[0]} does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise CorruptModel(f"layer {index} holds non-finite weights")
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def widths(self) -> list[int]:
        return [int(self.weights[0].shape[0])] + [int(w.shape[1]) for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        last = len(self.weights) - 1
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if index < last:
                x = np.maximum(x, 0.0)
        return x


@dataclass(frozen=True, eq=False)
class RglLayer:
    phi_e: MlpSpec
    phi_v1: MlpSpec
    phi_v2: MlpSpec


@dataclass(frozen=True, eq=False)
class ScoreModel:
    node_dim: int
    edge_dim: int
    layers: tuple[RglLayer, ...]
    phi_o: MlpSpec

    def __post_init__(self) -> None:
        dv, de = self.node_dim, self.edge_dim
        for index, layer in enumerate(self.layers):
            expected = {
                "phi_e": (layer.phi_e, 2 * dv + de, de),
                "phi_v1": (layer.phi_v1, de + dv, dv),
                "phi_v2": (layer.phi_v2, 2 * dv, dv),
            }
            for name, (mlp, fan_in, fan_out) in expected.items():
                if (mlp.in_dim, mlp.out_dim) != (fan_in, fan_out):
                    raise CorruptModel(
                        f"layer {index} {name} maps {mlp.in_dim}->{mlp.out_dim}, expected {fan_in}->{fan_out}"
                    )
        if (self.phi_o.in_dim, self.phi_o.out_dim) != (dv + de, 1):
            raise CorruptModel(f"phi_o maps {self.phi_o.in_dim}->{self.phi_o.out_dim}, expected {dv + de}->1")

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True, eq=False)
class GraphTensors:
    """Dense view of a graph: receivers ``i`` and senders ``j`` per directed edge."""

    nodes: np.ndarray
    receivers: np.ndarray
    senders: np.ndarray
    edges: np.ndarray


def _mean_by_receiver(messages: np.ndarray, receivers: np.ndarray, count: int) -> np.ndarray:
    """Mean incoming message per node; nodes without messages get zeros."""
    sums = np.zeros((count, messages.shape[1]), dtype=np.float64)
    np.add.at(sums, receivers, messages)
    sizes = np.bincount(receivers, minlength=count).astype(np.float64)
    return np.divide(sums, sizes[:, None], out=np.zeros_like(sums), where=sizes[:, None] > 0)


def rgl_forward(tensors: GraphTensors, layer: RglLayer) -> GraphTensors:
    nodes, edges = tensors.nodes, tensors.edges
    if nodes.shape[1] * 2 + edges.shape[1] != layer.phi_e.in_dim:
        raise DimensionMismatch("node/edge feature sizes do not match the layer")
    receivers, senders = tensors.receivers, tensors.senders
    v_i, v_j = nodes[receivers], nodes[senders]
    if len(edges):
        new_edges = np.maximum(edges + layer.phi_e(np.concatenate([v_i, v_j, edges], axis=1)), 0.0)
        messages = layer.phi_v1(np.concatenate([new_edges, v_j], axis=1))
    else:
        new_edges = edges
        messages = np.zeros((0, nodes.shape[1]), dtype=np.float64)
    aggregated = _mean_by_receiver(messages, receivers, len(nodes))
    new_nodes = np.maximum(nodes + layer.phi_v2(np.concatenate([aggregated, nodes], axis=1)), 0.0)
    return GraphTensors(new_nodes, receivers, senders, new_edges)


def graph_tensors(graph: SegGraph) -> GraphTensors:
    """Tensors in a canonical order that depends only on feature values.

    Node ids never influence the arithmetic, which makes scores bit-identical
    under relabelling and edge reordering.
    """
    ids = list(graph.nodes)
    raw = np.stack([graph.nodes[node_id].features for node_id in ids])
    order = np.lexsort(raw.T[::-1])
    rank = {ids[int(position)]: index for index, position in enumerate(order)}
    nodes = raw[order]

    directed = []
    for (a, b), feats in graph.edges.items():
        directed.append((rank[a], rank[b], feats))
        directed.append((rank[b], rank[a], feats))
    directed.sort(key=lambda item: (item[0], item[1]))
    edge_dim = next(iter(graph.edges.values())).size if graph.edges else 0
    receivers = np.asarray([item[0] for item in directed], dtype=np.int64)
    senders = np.asarray([item[1] for item in directed], dtype=np.int64)
    edges = (
        np.stack([item[2] for item in directed]) if directed else np.zeros((0, edge_dim), dtype=np.float64)
    )
    return GraphTensors(nodes, receivers, senders, edges)


def _column_mean(rows: np.ndarray, width: int) -> np.ndarray:
    if len(rows) == 0:
        return np.zeros(width, dtype=np.float64)
    return rows.sum(axis=0) / len(rows)


def score_tensors(tensors: GraphTensors, model: ScoreModel) -> float:
    if tensors.nodes.shape[1] != model.node_dim:
        raise DimensionMismatch(f"node features have {tensors.nodes.shape[1]} dims, model expects {model.node_dim}")
    if len(tensors.edges) and tensors.edges.shape[1] != model.edge_dim:
        raise DimensionMismatch(f"edge features have {tensors.edges.shape[1]} dims, model expects {model.edge_dim}")
    if not len(tensors.edges):
        tensors = GraphTensors(
            tensors.nodes, tensors.receivers, tensors.senders, np.zeros((0, model.edge_dim), dtype=np.float64)
        )
    for layer in model.layers:
        tensors = rgl_forward(tensors, layer)
    pooled = np.concatenate(
        [_column_mean(tensors.nodes, model.node_dim), _column_mean(tensors.edges, model.edge_dim)]
    )
    logit = float(model.phi_o(pooled[None, :])[0, 0])
    return float(np.clip(expit(logit), _SCORE_EPS, 1.0 - _SCORE_EPS))


def score_graph(graph: SegGraph, model: ScoreModel) -> float:
    return score_tensors(graph_tensors(graph), model)


def zero_mlp(widths: Sequence[int]) -> MlpSpec:
    return MlpSpec(
        weights=tuple(np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])),
        biases=tuple(np.zeros(b) for b in widths[1:]),
    )
