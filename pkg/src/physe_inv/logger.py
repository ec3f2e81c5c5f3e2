import logging
import os
from logging.handlers import RotatingFileHandler
from typing import List

try:
    from pythonjsonlogger.json import JsonFormatter
except ImportError:  # python-json-logger < 3.1
    from pythonjsonlogger.jsonlogger import JsonFormatter

from .config_handler import ConfigHandler

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(module)s - %(funcName)s - %(message)s"
MAX_LOG_SIZE_MB = 10
BACKUP_COUNT = 5

_installed_handlers: List[logging.Handler] = []


def _formatter(log_format: str) -> logging.Formatter:
    if log_format == "json":
        return JsonFormatter(LOG_FORMAT)
    return logging.Formatter(LOG_FORMAT)


def setup_logging(config: ConfigHandler) -> None:
    log_level = str(config.get("log_level", "INFO")).upper()
    logger = logging.getLogger()
    logger.setLevel(log_level)

    # Replace handlers from a previous call, leave foreign ones alone
    for handler in _installed_handlers:
        logger.removeHandler(handler)
        handler.close()
    _installed_handlers.clear()

    formatter = _formatter(config.get("log_format", "text"))

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)
    _installed_handlers.append(console_handler)

    log_file = config.get("log_file")
    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=MAX_LOG_SIZE_MB * 1024 * 1024,
            backupCount=BACKUP_COUNT
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
        _installed_handlers.append(file_handler)
