"""Deterministic JSON encoding for every structured output."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import orjson

from segrefine.errors import StorageError

_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def dumps(payload: Any) -> bytes:
    return orjson.dumps(payload, option=_OPTIONS) + b"\n"


def write_json(path: str | Path, payload: Any) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(dumps(payload))
    except OSError as exc:
        raise StorageError(str(target), str(exc)) from exc
    return target
