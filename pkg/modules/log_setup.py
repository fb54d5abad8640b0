from __future__ import annotations

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
import sys
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .config import LoggingConfig

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
RUN_LOG_NAME = "run.log"
RECORD_LOGGER_PREFIX = "records"

_installed: list[logging.Handler] = []


def configure_logging(logging_config: LoggingConfig, out_dir: Path | None = None) -> Path | None:
    """Console handler plus a rotating run log; returns the run log path, if any.

    Calling it again replaces the handlers installed by the previous call.
    """
    root = logging.getLogger()
    for handler in _installed:
        root.removeHandler(handler)
        handler.close()
    _installed.clear()

    level = getattr(logging, logging_config.level)
    root.setLevel(level)

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level)
    console.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(console)
    _installed.append(console)

    run_log = logging_config.run_log
    path = run_log.path
    if path is None and out_dir is not None:
        path = Path(out_dir) / RUN_LOG_NAME
    if path is None:
        return None

    path.parent.mkdir(parents=True, exist_ok=True)
    file_handler = RotatingFileHandler(
        path,
        maxBytes=run_log.max_bytes,
        backupCount=run_log.backup_count,
        encoding="utf-8",
    )
    file_handler.setLevel(level)
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(file_handler)
    _installed.append(file_handler)
    return path


def open_record_logger(name: str, path: Path) -> logging.Logger:
    """Non-propagating logger writing one bare message per line to ``path`` (truncated first)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setLevel(0)
    handler.setFormatter(None)
    record_logger = logging.getLogger(f"{RECORD_LOGGER_PREFIX}.{name}.{path.resolve()}")
    record_logger.propagate = False
    record_logger.setLevel(logging.INFO)
    close_record_logger(record_logger)
    record_logger.addHandler(handler)
    return record_logger


def close_record_logger(record_logger: logging.Logger) -> None:
    for handler in list(record_logger.handlers):
        record_logger.removeHandler(handler)
        handler.close()
