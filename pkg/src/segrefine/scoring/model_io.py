"""Score-model files and seeded initialisation.

File layout: a 4-byte little-endian header length, a UTF-8 JSON header, then
every weight and bias as little-endian float64 in layer order (phi_e, phi_v1,
phi_v2 per layer, then phi_o). The header records the xxh64 of the blob.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Any

import numpy as np
import orjson
import xxhash

from segrefine.errors import CorruptModel, DimMismatch, MissingFile, StorageError
from segrefine.scoring.sgs_net import MlpSpec, RglLayer, ScoreModel

logger = logging.getLogger(__name__)

MODEL_FORMAT = "segrefine-sgs"
MODEL_VERSION = 1
DEFAULT_HIDDEN = 64
DEFAULT_LAYERS = 3

_LAYER_PARTS = ("phi_e", "phi_v1", "phi_v2")


def _mlp_widths(node_dim: int, edge_dim: int, hidden: list[int]) -> dict[str, list[int]]:
    return {
        "phi_e": [2 * node_dim + edge_dim, *hidden, edge_dim],
        "phi_v1": [edge_dim + node_dim, *hidden, node_dim],
        "phi_v2": [2 * node_dim, *hidden, node_dim],
        "phi_o": [node_dim + edge_dim, *hidden, 1],
    }


def _uniform_mlp(rng: np.random.Generator, widths: list[int]) -> MlpSpec:
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpSpec(tuple(weights), tuple(biases))


def init_model(
    seed: int,
    node_dim: int = 32,
    edge_dim: int = 32,
    *,
    num_layers: int = DEFAULT_LAYERS,
    hidden: list[int] | None = None,
) -> ScoreModel:
    if node_dim < 1 or edge_dim < 1 or num_layers < 0:
        raise DimMismatch(f"invalid model dims node={node_dim} edge={edge_dim} layers={num_layers}")
    hidden = [DEFAULT_HIDDEN] if hidden is None else list(hidden)
    widths = _mlp_widths(node_dim, edge_dim, hidden)
    rng = np.random.default_rng(seed)
    layers = tuple(
        RglLayer(*(_uniform_mlp(rng, widths[part]) for part in _LAYER_PARTS)) for _ in range(num_layers)
    )
    return ScoreModel(node_dim, edge_dim, layers, _uniform_mlp(rng, widths["phi_o"]))


def _mlps_in_order(model: ScoreModel) -> list[MlpSpec]:
    ordered: list[MlpSpec] = []
    for layer in model.layers:
        ordered.extend([layer.phi_e, layer.phi_v1, layer.phi_v2])
    ordered.append(model.phi_o)
    return ordered


def model_to_bytes(model: ScoreModel) -> bytes:
    arrays = []
    for mlp in _mlps_in_order(model):
        for w, b in zip(mlp.weights, mlp.biases):
            arrays.extend([w.ravel(), b])
    blob = np.concatenate(arrays).astype("<f8").tobytes() if arrays else b""
    header: dict[str, Any] = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "node_dim": model.node_dim,
        "edge_dim": model.edge_dim,
        "num_layers": model.num_layers,
        "layers": [{part: getattr(layer, part).widths for part in _LAYER_PARTS} for layer in model.layers],
        "phi_o": model.phi_o.widths,
        "blob_bytes": len(blob),
        "checksum": xxhash.xxh64_hexdigest(blob),
    }
    encoded = orjson.dumps(header, option=orjson.OPT_SORT_KEYS)
    return struct.pack("<I", len(encoded)) + encoded + blob


def save_model(model: ScoreModel, path: str | Path) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(model_to_bytes(model))
    except OSError as exc:
        raise StorageError(str(target), str(exc)) from exc
    logger.info("Wrote score model to %s", target)
    return target


def _take_mlp(widths: Any, blob: np.ndarray, offset: int) -> tuple[MlpSpec, int]:
    if not isinstance(widths, list) or len(widths) < 2 or not all(isinstance(w, int) and w > 0 for w in widths):
        raise CorruptModel(f"invalid layer widths {widths!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        size = fan_in * fan_out
        if offset + size + fan_out > blob.size:
            raise CorruptModel("weight blob is shorter than the header declares")
        weights.append(blob[offset : offset + size].reshape(fan_in, fan_out))
        offset += size
        biases.append(blob[offset : offset + fan_out])
        offset += fan_out
    return MlpSpec(tuple(weights), tuple(biases)), offset


def model_from_bytes(data: bytes, *, expected_dims: tuple[int, int] | None = None) -> ScoreModel:
    if len(data) < 4:
        raise CorruptModel("model file is truncated")
    (header_len,) = struct.unpack("<I", data[:4])
    if 4 + header_len > len(data):
        raise CorruptModel("model header is truncated")
    try:
        header = orjson.loads(data[4 : 4 + header_len])
    except orjson.JSONDecodeError as exc:
        raise CorruptModel(f"unreadable model header: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != MODEL_FORMAT:
        raise CorruptModel("not a score-model file")
    if header.get("version") != MODEL_VERSION:
        raise CorruptModel(f"unsupported model version {header.get('version')!r}")
    blob_bytes = data[4 + header_len :]
    if len(blob_bytes) != header.get("blob_bytes") or len(blob_bytes) % 8:
        raise CorruptModel("weight blob size does not match the header")
    if xxhash.xxh64_hexdigest(blob_bytes) != header.get("checksum"):
        raise CorruptModel("weight blob checksum mismatch")
    blob = np.frombuffer(blob_bytes, dtype="<f8").astype(np.float64)

    try:
        node_dim, edge_dim = int(header["node_dim"]), int(header["edge_dim"])
        layer_specs = header["layers"]
        if len(layer_specs) != int(header["num_layers"]):
            raise CorruptModel("layer count does not match the header")
        offset = 0
        layers = []
        for spec in layer_specs:
            parts = []
            for part in _LAYER_PARTS:
                mlp, offset = _take_mlp(spec[part], blob, offset)
                parts.append(mlp)
            layers.append(RglLayer(*parts))
        phi_o, offset = _take_mlp(header["phi_o"], blob, offset)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"malformed model header: {exc}") from exc
    if offset != blob.size:
        raise CorruptModel("weight blob has trailing values")
    model = ScoreModel(node_dim, edge_dim, tuple(layers), phi_o)
    if expected_dims is not None and (node_dim, edge_dim) != tuple(expected_dims):
        raise DimMismatch(f"model dims {(node_dim, edge_dim)} do not match expected {tuple(expected_dims)}")
    return model


def load_model(path: str | Path, *, expected_dims: tuple[int, int] | None = None) -> ScoreModel:
    source = Path(path)
    if not source.exists():
        raise MissingFile(str(source))
    try:
        data = source.read_bytes()
    except OSError as exc:
        raise StorageError(str(source), str(exc)) from exc
    return model_from_bytes(data, expected_dims=expected_dims)
