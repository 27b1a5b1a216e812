from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv


PROJECT_ROOT = Path(__file__).resolve().parents[3]

load_dotenv(dotenv_path=PROJECT_ROOT / ".env", override=False)


@dataclass
class AppSettings:
    data_dir: Path
    logs_dir: Path
    output_dir: Path
    schemas_dir: Path
    model_path: Path | None
    log_level: str


_SETTINGS: Optional[AppSettings] = None


def _resolve_path(value: str | Path | None, *, base_dir: Path) -> Path:
    """Resolve relative config paths against the repository root."""

    if value is None:
        raise ValueError("Path value cannot be None.")

    path = Path(value).expanduser()
    if not path.is_absolute():
        path = base_dir / path
    return path


def _is_directory_writable(path: Path) -> bool:
    """Check if a directory can be created and written to."""

    try:
        path.mkdir(parents=True, exist_ok=True)
        test_file = path / ".write_test"
        with test_file.open("w", encoding="utf-8") as handle:
            handle.write("ok")
        test_file.unlink()
        return True
    except Exception:
        return False


def load_settings(
    *,
    data_dir: str | Path | None = None,
    logs_dir: str | Path | None = None,
    output_dir: str | Path | None = None,
    model_path: str | Path | None = None,
    log_level: str | None = None,
) -> AppSettings:
    """Load application settings with optional overrides."""

    fallback_base = Path(os.getenv("TMPDIR", "/tmp")) / "segrefine"

    default_data_dir = PROJECT_ROOT / "data" / "scenes"
    default_logs_dir = PROJECT_ROOT / "logs"
    default_output_dir = PROJECT_ROOT / "data" / "output"

    if not _is_directory_writable(default_logs_dir):
        default_data_dir = fallback_base / "data" / "scenes"
        default_logs_dir = fallback_base / "logs"
        default_output_dir = fallback_base / "data" / "output"

    resolved_data_dir = _resolve_path(
        data_dir or os.getenv("SEGREFINE_DATA_DIR") or default_data_dir,
        base_dir=PROJECT_ROOT,
    )
    resolved_logs_dir = _resolve_path(
        logs_dir or os.getenv("SEGREFINE_LOGS_DIR") or default_logs_dir,
        base_dir=PROJECT_ROOT,
    )
    resolved_output_dir = _resolve_path(
        output_dir or os.getenv("SEGREFINE_OUTPUT_DIR") or default_output_dir,
        base_dir=PROJECT_ROOT,
    )
    raw_model_path = model_path or os.getenv("SEGREFINE_MODEL_PATH")
    resolved_model_path = (
        _resolve_path(raw_model_path, base_dir=PROJECT_ROOT) if raw_model_path else None
    )
    resolved_log_level = (log_level or os.getenv("SEGREFINE_LOG_LEVEL") or "INFO").upper()

    global _SETTINGS
    resolved_logs_dir.mkdir(parents=True, exist_ok=True)
    _SETTINGS = AppSettings(
        data_dir=resolved_data_dir,
        logs_dir=resolved_logs_dir,
        output_dir=resolved_output_dir,
        schemas_dir=PROJECT_ROOT / "schemas",
        model_path=resolved_model_path,
        log_level=resolved_log_level,
    )
    return _SETTINGS


def get_settings() -> AppSettings:
    """Return the cached settings, loading defaults if necessary."""

    if _SETTINGS is None:
        return load_settings()
    return _SETTINGS
