"""Logging setup shared by the CLI, the sweep workers and the HTTP app.

Creates a console handler and two rotating file handlers with a common
formatter: timestamp, level, logger name, message. Warnings and above are
also copied to a separate error log.
"""

from __future__ import annotations

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

from settings import settings

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def _has_file_handler(root_logger: logging.Logger, path: Path) -> bool:
    return any(
        isinstance(h, RotatingFileHandler) and getattr(h, "baseFilename", "").endswith(str(path))
        for h in root_logger.handlers
    )


def _has_console_handler(root_logger: logging.Logger) -> bool:
    return any(type(h) is logging.StreamHandler for h in root_logger.handlers)


def init_logging(log_dir: str | None = None, level: int = logging.INFO) -> None:
    """Initialize process-wide logging.

    - Writes info-level logs to <log_dir>/app.log (rotating)
    - Writes warnings and errors to <log_dir>/error.log (rotating)
    - Always logs to console as well

    Safe to call more than once; handlers are only added the first time.
    """
    logs_path = Path(log_dir or settings.log_dir)
    logs_path.mkdir(parents=True, exist_ok=True)

    # 2026-01-15 12:34:56 | INFO | core | message
    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    if not _has_console_handler(root_logger):
        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)
        root_logger.addHandler(console_handler)

    app_log_path = logs_path / "app.log"
    if not _has_file_handler(root_logger, app_log_path):
        app_file_handler = RotatingFileHandler(
            app_log_path, maxBytes=5 * 1024 * 1024, backupCount=5, encoding="utf-8"
        )
        app_file_handler.setLevel(logging.INFO)
        app_file_handler.setFormatter(formatter)
        root_logger.addHandler(app_file_handler)

    err_log_path = logs_path / "error.log"
    if not _has_file_handler(root_logger, err_log_path):
        err_file_handler = RotatingFileHandler(
            err_log_path, maxBytes=5 * 1024 * 1024, backupCount=5, encoding="utf-8"
        )
        err_file_handler.setLevel(logging.WARNING)
        err_file_handler.setFormatter(formatter)
        root_logger.addHandler(err_file_handler)

    logging.getLogger(__name__).info("Logging initialized.")
