import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

ROOT_LOGGER = 'snellforge'
FILE_FORMAT = '%(asctime)s | %(levelname)-8s | %(name)s:%(funcName)s:%(lineno)d | %(message)s'
CONSOLE_FORMAT = '%(asctime)s | %(levelname)-8s | %(name)s | %(message)s'


def _level(level: Union[str, int]) -> int:
    if isinstance(level, int):
        return level
    resolved = logging.getLevelName(level.upper())
    if not isinstance(resolved, int):
        raise ValueError(f"Unknown log level: {level}")
    return resolved


def setup_logger(
    name: str = ROOT_LOGGER,
    level: Union[str, int] = 'INFO',
    log_dir: Optional[Union[str, Path]] = None,
) -> logging.Logger:
    """
    Configure the snellforge logger: stderr console handler plus an optional daily file.

    stdout stays free for the JSON documents printed by the CLI. Calling this
    again (tests run main() many times) only updates the levels.

    Args:
        name: Logger name
        level: Console level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_dir: Directory for log files; console only when empty

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    numeric = _level(level)
    logger.setLevel(min(numeric, logging.DEBUG) if log_dir else numeric)
    logger.propagate = False

    console = next((h for h in logger.handlers if getattr(h, '_snellforge_console', False)), None)
    if console is None:
        console = logging.StreamHandler(sys.stderr)
        console.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt='%H:%M:%S'))
        console._snellforge_console = True
        logger.addHandler(console)
    console.setLevel(numeric)

    if log_dir and not any(isinstance(h, logging.FileHandler) for h in logger.handlers):
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        log_file = log_dir / f"{name}_{datetime.now().strftime('%Y%m%d')}.log"
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt='%Y-%m-%d %H:%M:%S'))
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Logger nested under 'snellforge', so one setup_logger() call configures every module.

    Args:
        name: Logger name (usually __name__)
    """
    if name == ROOT_LOGGER or name.startswith(f'{ROOT_LOGGER}.'):
        return logging.getLogger(name)
    return logging.getLogger(f'{ROOT_LOGGER}.{name}')
