"""
Logging for the QPL semantics toolkit.

All module loggers are children of one ``qpl`` logger; handlers live on that
parent only and are installed once, from the ``logging`` section of the config.
Console output goes to stderr so that stdout carries nothing but reports.
"""

import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Optional

import colorlog

ROOT_NAME = "qpl"

CONSOLE_FORMAT = "%(log_color)s%(levelname)-8s%(reset)s %(name)s: %(message)s"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

LOG_COLORS = {
    "DEBUG": "cyan",
    "INFO": "green",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "red,bg_white",
}


def _level(name: str) -> int:
    level = logging.getLevelName(name.upper())
    if not isinstance(level, int):
        raise ValueError(f"Unknown log level {name!r}")
    return level


def setup_logger(
    log_level: str = "WARNING",
    log_file: Optional[str] = None,
    max_bytes: int = 10485760,  # 10MB
    backup_count: int = 5,
    console_enabled: bool = True,
    file_enabled: bool = False,
) -> logging.Logger:
    """
    (Re)configure the ``qpl`` parent logger.

    Args:
        log_level: DEBUG, INFO, WARNING, ERROR or CRITICAL
        log_file: Rotating log file (``logs/qpl.log`` when None)
        max_bytes: Size at which the file rotates
        backup_count: Rotated files kept
        console_enabled: Coloured handler on stderr
        file_enabled: Rotating file handler

    Returns:
        The ``qpl`` logger
    """
    root = logging.getLogger(ROOT_NAME)
    level = _level(log_level)
    root.setLevel(level)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    if console_enabled:
        console = colorlog.StreamHandler(sys.stderr)
        console.setLevel(level)
        console.setFormatter(colorlog.ColoredFormatter(CONSOLE_FORMAT, log_colors=LOG_COLORS))
        root.addHandler(console)

    if file_enabled:
        path = Path(log_file or "logs/qpl.log")
        path.parent.mkdir(parents=True, exist_ok=True)
        rotating = logging.handlers.RotatingFileHandler(
            path, maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8"
        )
        rotating.setLevel(level)
        rotating.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
        root.addHandler(rotating)

    root.propagate = False
    return root


def get_logger(name: str = ROOT_NAME) -> logging.Logger:
    """
    Logger ``qpl.<name>`` (or ``qpl`` itself); configures the parent from
    the config on first use.
    """
    root = logging.getLogger(ROOT_NAME)
    if not root.handlers:
        from src.utils.config import get_config

        config = get_config()
        setup_logger(
            log_level=config.log_level,
            log_file=config.get("logging.file_path"),
            max_bytes=config.get("logging.max_bytes", 10485760),
            backup_count=config.get("logging.backup_count", 5),
            console_enabled=config.get("logging.console_enabled", True),
            file_enabled=config.get("logging.file_enabled", False),
        )
    if name == ROOT_NAME or name.startswith(f"{ROOT_NAME}."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_NAME}.{name}")
