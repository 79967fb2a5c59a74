"""
Logging configuration for srmaser.
"""

import logging
import logging.handlers
from datetime import datetime
from pathlib import Path
from typing import Optional

DETAILED_FORMAT = '%(asctime)s | %(levelname)-8s | %(name)s | %(funcName)s:%(lineno)d | %(message)s'
SIMPLE_FORMAT = '%(asctime)s | %(levelname)-8s | %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

APP_LOGGER = "srmaser"


def setup_logging(
    log_level: str = "INFO",
    log_dir: Optional[str] = "logs",
    log_file: Optional[str] = None,
    max_bytes: int = 10 * 1024 * 1024,  # 10MB
    backup_count: int = 5,
    console: bool = True,
) -> logging.Logger:
    """
    Set up structured logging with file rotation.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_dir: Directory for log files; None disables the file handler
        log_file: Log file name (default: srmaser_YYYY-MM-DD.log)
        max_bytes: Maximum log file size before rotation
        backup_count: Number of rotated files to keep
        console: Attach a console handler

    Returns:
        The application logger.
    """
    numeric_level = getattr(logging, str(log_level).upper(), logging.INFO)

    detailed_formatter = logging.Formatter(DETAILED_FORMAT, datefmt=DATE_FORMAT)
    simple_formatter = logging.Formatter(SIMPLE_FORMAT, datefmt=DATE_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    if log_dir:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        if not log_file:
            log_file = f"srmaser_{datetime.now().strftime('%Y-%m-%d')}.log"
        file_handler = logging.handlers.RotatingFileHandler(
            log_path / log_file,
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding='utf-8'
        )
        file_handler.setLevel(numeric_level)
        file_handler.setFormatter(detailed_formatter)
        root_logger.addHandler(file_handler)

    if console:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(numeric_level)
        console_handler.setFormatter(simple_formatter)
        root_logger.addHandler(console_handler)

    # Third-party chatter
    for noisy in ("matplotlib", "numba", "qutip"):
        logging.getLogger(noisy).setLevel(logging.WARNING)

    app_logger = logging.getLogger(APP_LOGGER)
    app_logger.setLevel(numeric_level)
    return app_logger


def get_logger(name: str = APP_LOGGER) -> logging.Logger:
    """Get a logger instance."""
    return logging.getLogger(name)
