from __future__ import annotations

import numpy as np
import pytest
from scipy.special import expit

from segrefine.errors import CorruptModel, DimensionMismatch, DimMismatch, MissingFile, ProviderUnavailable
from segrefine.geometry.masks import LabelImage
from segrefine.graph.seg_graph import build_graph
from segrefine.models.config import EngineConfig
from segrefine.scene.generator import generate_scene
from segrefine.scoring.model_io import init_model, load_model, model_from_bytes, model_to_bytes, save_model
from segrefine.scoring.scorers import ConstantScorer, OracleScorer, SgsNetScorer, make_scorer
from segrefine.scoring.sgs_net import (
    GraphTensors,
    MlpSpec,
    RglLayer,
    ScoreModel,
    graph_tensors,
    rgl_forward,
    score_graph,
    score_tensors,
    zero_mlp,
)

from tests.conftest import make_scene


def _linear(weights: list[list[float]], bias: float = 0.0) -> MlpSpec:
    matrix = np.asarray(weights, dtype=np.float64)
    return MlpSpec((matrix,), (np.full(matrix.shape[1], bias),))


def _two_node_tensors() -> GraphTensors:
    return GraphTensors(
        nodes=np.array([[1.0], [2.0]]),
        receivers=np.array([0, 1]),
        senders=np.array([1, 0]),
        edges=np.array([[0.5], [0.5]]),
    )


def _hand_layer() -> RglLayer:
    return RglLayer(
        phi_e=_linear([[1.0], [0.0], [1.0]]),
        phi_v1=_linear([[1.0], [1.0]]),
        phi_v2=_linear([[1.0], [-1.0]]),
    )


def test_rgl_layer_matches_hand_computation() -> None:
    out = rgl_forward(_two_node_tensors(), _hand_layer())
    assert out.edges.ravel().tolist() == [2.0, 3.0]
    assert out.nodes.ravel().tolist() == [4.0, 4.0]


def test_rgl_layer_averages_by_in_degree() -> None:
    # Node 0 hears from nodes 1 and 2; node 3 has no edges.
    tensors = GraphTensors(
        nodes=np.array([[1.0], [2.0], [4.0], [3.0]]),
        receivers=np.array([0, 0, 1, 2]),
        senders=np.array([1, 2, 0, 0]),
        edges=np.full((4, 1), 0.5),
    )
    out = rgl_forward(tensors, _hand_layer())
    assert out.edges.ravel().tolist() == [2.0, 2.0, 3.0, 5.0]
    assert out.nodes.ravel().tolist() == [5.0, 4.0, 6.0, 0.0]


def test_score_matches_hand_computation() -> None:
    model = ScoreModel(1, 1, (_hand_layer(),), _linear([[1.0], [1.0]], bias=-8.0))
    assert score_tensors(_two_node_tensors(), model) == pytest.approx(float(expit(-1.5)))


def test_zero_residuals_leave_non_negative_features_unchanged() -> None:
    layer = RglLayer(zero_mlp([3, 4, 1]), zero_mlp([2, 4, 1]), zero_mlp([2, 4, 1]))
    tensors = _two_node_tensors()
    out = rgl_forward(rgl_forward(tensors, layer), layer)
    assert np.array_equal(out.nodes, tensors.nodes)
    assert np.array_equal(out.edges, tensors.edges)


def test_zero_output_layer_scores_one_half(two_squares) -> None:
    scene = make_scene(two_squares)
    graph = build_graph(scene, scene.labels)
    model = init_model(1)
    zeroed = ScoreModel(model.node_dim, model.edge_dim, model.layers, zero_mlp([64, 64, 1]))
    assert score_graph(graph, zeroed) == 0.5


def test_rgl_forward_rejects_wrong_dims() -> None:
    layer = RglLayer(zero_mlp([5, 1]), zero_mlp([2, 1]), zero_mlp([2, 1]))
    with pytest.raises(DimensionMismatch):
        rgl_forward(_two_node_tensors(), layer)


def test_mlp_spec_rejects_broken_chain() -> None:
    with pytest.raises(CorruptModel):
        MlpSpec((np.zeros((3, 2)), np.zeros((4, 1))), (np.zeros(2), np.zeros(1)))
    with pytest.raises(CorruptModel):
        MlpSpec((np.full((1, 1), np.nan),), (np.zeros(1),))


def test_score_model_checks_layer_shapes() -> None:
    with pytest.raises(CorruptModel):
        ScoreModel(2, 2, (RglLayer(zero_mlp([5, 2]), zero_mlp([4, 2]), zero_mlp([4, 2])),), zero_mlp([4, 1]))


def test_score_is_invariant_to_relabeling(two_rectangles) -> None:
    swapped = np.where(two_rectangles == 1, 2, np.where(two_rectangles == 2, 1, 0))
    scene = make_scene(two_rectangles)
    model = init_model(3)
    first = score_graph(build_graph(scene, LabelImage(two_rectangles)), model)
    second = score_graph(build_graph(scene, LabelImage(swapped * 5)), model)
    assert first == second
    assert 0.0 < first < 1.0


def _reference_score(graph, model: ScoreModel) -> float:
    """Direct per-node evaluation, independent of the dense tensor path."""
    nodes = {node_id: graph.features(node_id).copy() for node_id in graph.nodes}
    edges = {}
    for (a, b), feats in graph.edges.items():
        edges[(a, b)] = feats.copy()
        edges[(b, a)] = feats.copy()
    for layer in model.layers:
        new_edges = {
            (i, j): np.maximum(e + layer.phi_e(np.concatenate([nodes[i], nodes[j], e])[None, :])[0], 0.0)
            for (i, j), e in edges.items()
        }
        new_nodes = {}
        for i, v in nodes.items():
            messages = [
                layer.phi_v1(np.concatenate([e, nodes[j]])[None, :])[0]
                for (r, j), e in new_edges.items()
                if r == i
            ]
            mean = np.mean(messages, axis=0) if messages else np.zeros(model.node_dim)
            new_nodes[i] = np.maximum(v + layer.phi_v2(np.concatenate([mean, v])[None, :])[0], 0.0)
        nodes, edges = new_nodes, new_edges
    v_bar = np.mean(list(nodes.values()), axis=0)
    e_bar = np.mean(list(edges.values()), axis=0) if edges else np.zeros(model.edge_dim)
    return float(expit(model.phi_o(np.concatenate([v_bar, e_bar])[None, :])[0, 0]))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_score_matches_reference_evaluation(seed: int) -> None:
    scene = generate_scene(seed)
    assert scene.labels is not None
    graph = build_graph(scene, scene.labels)
    model = init_model(seed, num_layers=2, hidden=[16])
    assert score_graph(graph, model) == pytest.approx(_reference_score(graph, model), abs=1e-12)


def test_graph_tensors_double_every_edge(two_squares) -> None:
    scene = make_scene(two_squares)
    tensors = graph_tensors(build_graph(scene, scene.labels))
    assert len(tensors.edges) == 2
    assert sorted(zip(tensors.receivers.tolist(), tensors.senders.tolist())) == sorted(
        zip(tensors.senders.tolist(), tensors.receivers.tolist())
    )


def test_init_model_is_seeded() -> None:
    first, second = init_model(4), init_model(4)
    assert model_to_bytes(first) == model_to_bytes(second)
    assert model_to_bytes(first) != model_to_bytes(init_model(5))
    bound = np.sqrt(6.0 / (96 + 64))
    assert np.abs(first.layers[0].phi_e.weights[0]).max() <= bound


def test_model_file_round_trip_is_bit_exact(tmp_path) -> None:
    model = init_model(2, num_layers=2, hidden=[8, 8])
    path = save_model(model, tmp_path / "models" / "sgs.bin")
    loaded = load_model(path, expected_dims=(32, 32))
    assert model_to_bytes(loaded) == path.read_bytes()
    assert loaded.num_layers == 2


def test_model_file_checksum_mismatch() -> None:
    data = bytearray(model_to_bytes(init_model(0, num_layers=1, hidden=[4])))
    data[-1] ^= 0xFF
    with pytest.raises(CorruptModel):
        model_from_bytes(bytes(data))


@pytest.mark.parametrize("data", [b"", b"\x05\x00\x00\x00{}", b"\x02\x00\x00\x00{}"])
def test_model_file_rejects_garbage(data: bytes) -> None:
    with pytest.raises(CorruptModel):
        model_from_bytes(data)


def test_model_file_dimension_check(tmp_path) -> None:
    path = save_model(init_model(0, node_dim=24, edge_dim=8, num_layers=1), tmp_path / "m.bin")
    with pytest.raises(DimMismatch):
        load_model(path, expected_dims=(32, 32))
    with pytest.raises(MissingFile):
        load_model(tmp_path / "absent.bin")


def test_make_scorer_variants(tmp_path, two_squares) -> None:
    scene = make_scene(two_squares)
    graph = build_graph(scene, scene.labels)

    assert make_scorer(EngineConfig(scorer="constant"))(graph) == 0.5
    assert isinstance(make_scorer(EngineConfig(scorer="constant")), ConstantScorer)

    oracle = make_scorer(EngineConfig(), scene.labels)
    assert isinstance(oracle, OracleScorer)
    assert oracle(graph) == 1.0
    with pytest.raises(ProviderUnavailable):
        make_scorer(EngineConfig())

    path = save_model(init_model(0, num_layers=1, hidden=[8]), tmp_path / "m.bin")
    scorer = make_scorer(EngineConfig(scorer="model", model_path=str(path)))
    assert isinstance(scorer, SgsNetScorer)
    assert 0.0 < scorer(graph) < 1.0
