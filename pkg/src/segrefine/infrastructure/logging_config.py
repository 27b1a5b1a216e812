from __future__ import annotations

import logging
import sys
import tempfile
import threading
import time
import traceback
import uuid
from datetime import datetime, timezone
from functools import wraps
from pathlib import Path
from typing import Any, Callable

import orjson

from segrefine.infrastructure.settings import get_settings

logger = logging.getLogger(__name__)

_error_events_lock = threading.Lock()
_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _resolve_logs_dir() -> Path:
    try:
        logs_dir = get_settings().logs_dir
        logs_dir.mkdir(parents=True, exist_ok=True)
    except Exception:
        logs_dir = Path(tempfile.gettempdir()) / "segrefine" / "logs"
        logs_dir.mkdir(parents=True, exist_ok=True)
    return logs_dir


def initialize_logging(level: str | int = "INFO") -> Path:
    """Send package logs to stderr and to ``segrefine.log`` in the logs dir."""

    logs_dir = _resolve_logs_dir()
    log_path = logs_dir / "segrefine.log"

    formatter = logging.Formatter(_LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")
    package_logger = logging.getLogger("segrefine")
    package_logger.handlers.clear()
    package_logger.setLevel(level)
    package_logger.propagate = False

    file_error: OSError | None = None
    try:
        file_handler = logging.FileHandler(log_path, encoding="utf-8")
        file_handler.setFormatter(formatter)
        package_logger.addHandler(file_handler)
    except OSError as exc:
        file_error = exc

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    package_logger.addHandler(console_handler)

    if file_error is not None:
        package_logger.warning("Logging to stderr only; cannot open %s: %s", log_path, file_error)

    return log_path


def error_events_path() -> Path:
    return _resolve_logs_dir() / "cli_error_events.jsonl"


def _to_jsonable(value: Any) -> Any:
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set)):
        return [_to_jsonable(item) for item in value]
    return repr(value)


def append_failure_event(
    *,
    command: str,
    arguments: Any,
    error_type: str | None,
    error_message: str | None,
    traceback_text: str | None,
    execution_time_ms: int,
) -> None:
    event: dict[str, Any] = {
        "event_id": str(uuid.uuid4()),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "arguments": _to_jsonable(arguments),
        "execution_time_ms": execution_time_ms,
        "error_type": error_type,
        "error_message": error_message,
        "traceback": traceback_text,
    }
    path = error_events_path()
    try:
        with _error_events_lock:
            with path.open("ab") as handle:
                handle.write(orjson.dumps(event) + b"\n")
    except Exception:
        logger.exception("Failed to write CLI error event to %s", path)


def log_command_call(command: str) -> Callable[[Callable[..., int]], Callable[..., int]]:
    """
    Decorator to log CLI command calls with arguments, timing and failures.
    """

    def decorator(func: Callable[..., int]) -> Callable[..., int]:
        @wraps(func)
        def wrapper(args: Any) -> int:
            start_time = time.time()
            arguments = vars(args) if hasattr(args, "__dict__") else args
            logger.info("=== COMMAND: %s ===", command)
            logger.debug("Arguments: %s", _to_jsonable(arguments))
            try:
                result = func(args)
            except Exception as exc:
                execution_time = time.time() - start_time
                append_failure_event(
                    command=command,
                    arguments=arguments,
                    error_type=type(exc).__name__,
                    error_message=str(exc),
                    traceback_text=traceback.format_exc(),
                    execution_time_ms=int(execution_time * 1000),
                )
                logger.error("Error in %s: %s", command, exc)
                logger.info("=== END (ERROR): %s (%.3fs) ===", command, execution_time)
                raise
            logger.info("=== END: %s (%.3fs) ===", command, time.time() - start_time)
            return result

        return wrapper

    return decorator
