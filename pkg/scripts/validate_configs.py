"""Validate engine, generator and corruption config files against the shipped JSON schemas."""

from __future__ import annotations

import argparse
import json
from pathlib import Path
from typing import Iterable

import yaml
from jsonschema import Draft202012Validator

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"

# File name fragment -> schema, matched against the config file stem.
SCHEMAS = {
    "engine": "engine_config.schema.json",
    "generator": "generator_config.schema.json",
    "corruption": "corruption_config.schema.json",
}


def load_schema(name: str) -> dict:
    with (SCHEMA_DIR / name).open("r", encoding="utf-8") as handle:
        return json.load(handle)


def schema_for(path: Path, forced: str | None) -> str | None:
    if forced:
        return SCHEMAS[forced]
    for fragment, schema in SCHEMAS.items():
        if fragment in path.stem:
            return schema
    return None


def validate_file(path: Path, validator: Draft202012Validator) -> list[str]:
    try:
        with path.open("r", encoding="utf-8") as handle:
            payload = yaml.safe_load(handle)
    except Exception as exc:  # PyYAML errors
        return [f"YAML parse error in {path}: {exc}"]

    return [
        f"{path}: {err.message} (at {'/'.join(str(p) for p in err.path)})"
        for err in validator.iter_errors(payload if payload is not None else {})
    ]


def _config_files(target: Path) -> list[Path]:
    if target.is_dir():
        return sorted(p for pattern in ("*.yaml", "*.yml", "*.json") for p in target.rglob(pattern))
    return [target]


def main(argv: Iterable[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("paths", nargs="+", help="Config files or directories to validate")
    parser.add_argument("--kind", choices=sorted(SCHEMAS), help="Schema to use instead of guessing from the name")
    args = parser.parse_args(argv)

    validators = {name: Draft202012Validator(load_schema(name)) for name in SCHEMAS.values()}
    failures: list[str] = []
    checked = 0
    for target in args.paths:
        for file in _config_files(Path(target)):
            schema = schema_for(file, args.kind)
            if schema is None:
                print(f"Skipping {file} (cannot tell which config it holds; pass --kind)")
                continue
            checked += 1
            failures.extend(validate_file(file, validators[schema]))

    if failures:
        print("Validation errors detected:")
        for msg in failures:
            print(f" - {msg}")
        return 1

    print(f"All {checked} files passed schema validation.")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
