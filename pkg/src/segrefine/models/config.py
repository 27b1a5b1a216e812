"""Typed configuration for the engine, the scene generator and the corruptor.

Config files are YAML or JSON mappings validated against the schemas shipped in
``schemas/``; command-line flags override file values.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, TypeVar

import rapidfuzz
import yaml
from jsonschema import Draft202012Validator

from segrefine.errors import ConfigInvalid
from segrefine.infrastructure.settings import get_settings

logger = logging.getLogger(__name__)


class OperationKind(str, Enum):
    SPLIT = "split"
    MERGE = "merge"
    DELETE = "delete"
    ADD = "add"


ALL_OPERATIONS: tuple[str, ...] = tuple(kind.value for kind in OperationKind)

BOUNDARY_PROVIDERS = ("ground_truth", "depth_gradient", "from_file")
DELETE_PROVIDERS = ("ground_truth", "heuristic")
SCORERS = ("oracle", "model", "constant")
ADMISSION_MODES = ("score", "always")
SHAPE_KINDS = ("rectangle", "ellipse", "union")

# Length of the hand-crafted node descriptor before zero padding.
NODE_FEATURE_COUNT = 22


def _suggest(name: str, choices: tuple[str, ...] | list[str]) -> str:
    closer = rapidfuzz.process.extract(name, list(choices), limit=1)
    available = ", ".join(choices)
    if closer:
        return f"'{name}' is not recognised, did you mean '{closer[0][0]}'? Available: {available}"
    return f"'{name}' is not recognised. Available: {available}"


def _check_unit_open(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ConfigInvalid(name, f"must lie strictly between 0 and 1, got {value}")


def _check_positive(name: str, value: float) -> None:
    if value <= 0:
        raise ConfigInvalid(name, f"must be positive, got {value}")


def _check_choice(name: str, value: str, choices: tuple[str, ...]) -> None:
    if value not in choices:
        raise ConfigInvalid(name, _suggest(value, choices))


@dataclass(frozen=True)
class EngineConfig:
    """Refinement engine parameters. Defaults follow the published settings."""

    K: int = 3
    B: int = 3
    m_n: int = 350
    m_e: int = 1750
    edge_threshold: float = 10.0
    nu: float = 0.5
    add_threshold: float = 0.5
    proposal_threshold: float = 0.7
    proposals_per_op: int = 3
    min_add_area: int = 64
    split_attempts: int = 8
    min_piece_area: int = 4
    boundary_tolerance: int = 2
    node_dim: int = 32
    edge_dim: int = 32
    boundary_provider: str = "ground_truth"
    boundary_map_path: str | None = None
    depth_gradient_scale: float = 0.02
    delete_provider: str = "ground_truth"
    scorer: str = "oracle"
    model_path: str | None = None
    operations: tuple[str, ...] = ALL_OPERATIONS
    admission: str = "score"
    uncertainty_radius: float = 5.0
    uncertainty_threshold: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("B", "m_n", "m_e", "proposals_per_op", "split_attempts", "node_dim", "edge_dim"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigInvalid(name, f"must be an integer >= 1, got {value!r}")
        if not isinstance(self.K, int) or self.K < 0:
            raise ConfigInvalid("K", f"must be a non-negative integer, got {self.K!r}")
        for name in ("nu", "add_threshold", "proposal_threshold"):
            _check_unit_open(name, getattr(self, name))
        for name in ("edge_threshold", "depth_gradient_scale", "uncertainty_radius"):
            _check_positive(name, getattr(self, name))
        for name in ("min_add_area", "min_piece_area", "boundary_tolerance"):
            if getattr(self, name) < 0:
                raise ConfigInvalid(name, "must be non-negative")
        if self.node_dim < NODE_FEATURE_COUNT:
            raise ConfigInvalid("node_dim", f"must be >= {NODE_FEATURE_COUNT}, got {self.node_dim}")
        if self.uncertainty_threshold < 0:
            raise ConfigInvalid("uncertainty_threshold", "must be non-negative")
        _check_choice("boundary_provider", self.boundary_provider, BOUNDARY_PROVIDERS)
        _check_choice("delete_provider", self.delete_provider, DELETE_PROVIDERS)
        _check_choice("scorer", self.scorer, SCORERS)
        _check_choice("admission", self.admission, ADMISSION_MODES)
        operations = tuple(self.operations)
        if not operations:
            raise ConfigInvalid("operations", "at least one operation must be enabled")
        for name in operations:
            _check_choice("operations", name, ALL_OPERATIONS)
        # Canonical order keeps the random operation draw independent of listing order.
        object.__setattr__(
            self, "operations", tuple(kind for kind in ALL_OPERATIONS if kind in operations)
        )
        if self.boundary_provider == "from_file" and not self.boundary_map_path:
            raise ConfigInvalid("boundary_map_path", "required when boundary_provider is 'from_file'")
        if self.scorer == "model" and not self.model_path:
            raise ConfigInvalid("model_path", "required when scorer is 'model'")
        if not 0 <= self.seed < 2**64:
            raise ConfigInvalid("seed", "must fit in an unsigned 64-bit integer")

    @property
    def operation_kinds(self) -> tuple[OperationKind, ...]:
        return tuple(OperationKind(name) for name in self.operations)

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        payload["operations"] = list(self.operations)
        return payload


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic tabletop scene parameters (frame in pixels, geometry in metres)."""

    height: int = 120
    width: int = 160
    num_objects: int = 8
    min_object_area: int = 40
    object_radius_range: tuple[int, int] = (6, 16)
    object_height_range: tuple[float, float] = (0.02, 0.15)
    table_distance: float = 0.8
    table_slope: float = 0.2
    depth_noise: float = 0.0
    max_placement_attempts: int = 50
    shape_kinds: tuple[str, ...] = SHAPE_KINDS

    def __post_init__(self) -> None:
        if self.height < 64 or self.width < 64:
            raise ConfigInvalid("height" if self.height < 64 else "width", "image dims must be >= 64")
        if self.num_objects < 1:
            raise ConfigInvalid("num_objects", "must be >= 1")
        low, high = self.object_radius_range
        if low < 2 or high < low:
            raise ConfigInvalid("object_radius_range", f"invalid range {self.object_radius_range}")
        low_h, high_h = self.object_height_range
        if low_h <= 0 or high_h < low_h:
            raise ConfigInvalid("object_height_range", f"invalid range {self.object_height_range}")
        nearest_table = self.table_distance - self.table_slope / 2.0
        if nearest_table - high_h <= 0.05:
            raise ConfigInvalid("table_distance", "objects would reach the camera")
        if self.depth_noise < 0:
            raise ConfigInvalid("depth_noise", "must be non-negative")
        if self.max_placement_attempts < 1:
            raise ConfigInvalid("max_placement_attempts", "must be >= 1")
        if not self.shape_kinds:
            raise ConfigInvalid("shape_kinds", "at least one shape kind is required")
        for kind in self.shape_kinds:
            _check_choice("shape_kinds", kind, SHAPE_KINDS)
        object.__setattr__(self, "object_radius_range", (int(low), int(high)))
        object.__setattr__(self, "object_height_range", (float(low_h), float(high_h)))
        object.__setattr__(self, "shape_kinds", tuple(self.shape_kinds))

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        for key in ("object_radius_range", "object_height_range", "shape_kinds"):
            payload[key] = list(payload[key])
        return payload


@dataclass(frozen=True)
class CorruptionConfig:
    """How many synthetic segmentation errors to inject and of which kinds."""

    num_corruptions: int = 3
    weights: Mapping[str, float] = field(
        default_factory=lambda: {kind: 1.0 for kind in ALL_OPERATIONS}
    )
    min_piece_area: int = 20
    merge_distance: float = 1.5
    blob_radius_range: tuple[int, int] = (4, 12)
    max_attempts: int = 20

    def __post_init__(self) -> None:
        if self.num_corruptions < 0:
            raise ConfigInvalid("num_corruptions", "must be non-negative")
        weights = {kind: float(self.weights.get(kind, 0.0)) for kind in ALL_OPERATIONS}
        for kind in self.weights:
            _check_choice("weights", kind, ALL_OPERATIONS)
        if any(value < 0 for value in weights.values()):
            raise ConfigInvalid("weights", "weights must be non-negative")
        if self.num_corruptions and sum(weights.values()) <= 0:
            raise ConfigInvalid("weights", "at least one weight must be positive")
        object.__setattr__(self, "weights", weights)
        low, high = self.blob_radius_range
        if low < 1 or high < low:
            raise ConfigInvalid("blob_radius_range", f"invalid range {self.blob_radius_range}")
        object.__setattr__(self, "blob_radius_range", (int(low), int(high)))
        if self.min_piece_area < 1:
            raise ConfigInvalid("min_piece_area", "must be >= 1")
        _check_positive("merge_distance", self.merge_distance)
        if self.max_attempts < 1:
            raise ConfigInvalid("max_attempts", "must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        payload["weights"] = dict(self.weights)
        payload["blob_radius_range"] = list(self.blob_radius_range)
        return payload


ConfigT = TypeVar("ConfigT", EngineConfig, GeneratorConfig, CorruptionConfig)

_SCHEMA_FILES: dict[type, str] = {
    EngineConfig: "engine_config.schema.json",
    GeneratorConfig: "generator_config.schema.json",
    CorruptionConfig: "corruption_config.schema.json",
}

_TUPLE_FIELDS = {"operations", "object_radius_range", "object_height_range", "shape_kinds", "blob_radius_range"}


def load_schema(name: str) -> dict[str, Any]:
    path = get_settings().schemas_dir / name
    with path.open("r", encoding="utf-8") as handle:
        return json.load(handle)


def _read_mapping(path: str | Path) -> dict[str, Any]:
    source = Path(path)
    if not source.exists():
        raise ConfigInvalid("<file>", f"config file not found: {source}")
    try:
        with source.open("r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise ConfigInvalid("<file>", f"cannot parse {source}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigInvalid("<root>", f"{source} contains {type(data).__name__} at root level, expected a mapping")
    return data


def _schema_error_field(error: Any, known: list[str]) -> tuple[str, str]:
    if error.validator == "additionalProperties":
        extra = [key for key in error.instance if key not in known]
        name = str(extra[0]) if extra else "<root>"
        return name, _suggest(name, known)
    if error.validator == "enum" and error.path and isinstance(error.instance, str):
        return str(error.path[0]), _suggest(error.instance, [str(choice) for choice in error.validator_value])
    if error.path:
        return str(error.path[0]), error.message
    return "<root>", error.message


def build_config(config_type: type[ConfigT], raw: Mapping[str, Any]) -> ConfigT:
    """Validate ``raw`` against the schema for ``config_type`` and construct it."""
    known = [item.name for item in fields(config_type)]
    validator = Draft202012Validator(load_schema(_SCHEMA_FILES[config_type]))
    errors = sorted(validator.iter_errors(dict(raw)), key=lambda err: list(err.path))
    if errors:
        name, reason = _schema_error_field(errors[0], known)
        raise ConfigInvalid(name, reason)
    values = {
        key: tuple(value) if key in _TUPLE_FIELDS and isinstance(value, list) else value
        for key, value in raw.items()
    }
    return config_type(**values)


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    *,
    config_type: type[ConfigT] = EngineConfig,
) -> ConfigT:
    """Read a config file (optional), apply non-None ``overrides`` and validate."""
    raw = _read_mapping(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = list(value) if isinstance(value, tuple) else value
    config = build_config(config_type, raw)
    logger.debug("Loaded %s from %s", config_type.__name__, path or "defaults")
    return config
