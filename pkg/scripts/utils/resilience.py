"""
Resilience Utilities for the semionline toolkit

Shared plumbing for every script:
- Structured logging with one format across modules
- Config-driven log level and optional rotating log file
- Safe JSON / file helpers that log and fall back instead of raising
- Dependency probing for the self-test runner
"""

import importlib.util
import json
import logging
import logging.handlers
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

LOG_FORMAT = '[%(asctime)s] [%(name)s] [%(levelname)s] %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


def _logging_settings() -> Dict[str, Any]:
    """LOGGING section of config.yml, or an empty dict when unavailable"""
    try:
        from config_loader import get
    except ImportError:
        return {}
    settings = get("logging", {})
    return settings if isinstance(settings, dict) else {}


class ResilientLogger:
    """Logger with the shared format, level and optional rotating file taken from LOGGING"""

    def __init__(self, name: str, level: Optional[int] = None):
        self.logger = logging.getLogger(name)
        settings = _logging_settings()

        if level is None:
            level_name = str(settings.get("level", "INFO")).upper()
            level = getattr(logging, level_name, logging.INFO)
        self.logger.setLevel(level)

        if not self.logger.handlers:
            formatter = logging.Formatter(
                settings.get("format", LOG_FORMAT),
                datefmt=settings.get("datefmt", LOG_DATEFMT)
            )
            if settings.get("console", True):
                handler = logging.StreamHandler()
                handler.setFormatter(formatter)
                self.logger.addHandler(handler)

            file_cfg = settings.get("file", {}) or {}
            if file_cfg.get("enabled"):
                log_path = Path(file_cfg.get("path", "logs/semionline.log"))
                try:
                    log_path.parent.mkdir(parents=True, exist_ok=True)
                    file_handler = logging.handlers.RotatingFileHandler(
                        log_path,
                        maxBytes=int(file_cfg.get("max_bytes", 10_485_760)),
                        backupCount=int(file_cfg.get("backup_count", 3)),
                        encoding="utf-8"
                    )
                    file_handler.setFormatter(formatter)
                    self.logger.addHandler(file_handler)
                except OSError as e:
                    self.logger.warning(f"Log file {log_path} unavailable: {e}")
            self.logger.propagate = False

    def info(self, msg: str, **kwargs):
        self.logger.info(msg, **kwargs)

    def warn(self, msg: str, **kwargs):
        self.logger.warning(msg, **kwargs)

    def error(self, msg: str, exc_info: bool = False, **kwargs):
        self.logger.error(msg, exc_info=exc_info, **kwargs)

    def debug(self, msg: str, **kwargs):
        self.logger.debug(msg, **kwargs)

    def critical(self, msg: str, exc_info: bool = False, **kwargs):
        self.logger.critical(msg, exc_info=exc_info, **kwargs)


def safe_json_load(data: Optional[str], default: Any = None, logger: Optional[ResilientLogger] = None) -> Any:
    """Parse `data` as JSON; `default` when it is None or malformed"""
    if data is None:
        return default
    try:
        return json.loads(data)
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        if logger:
            logger.warn(f"Malformed JSON ({e}); falling back to default")
        return default


def safe_file_write(
    filepath: str,
    content: str,
    encoding: str = 'utf-8',
    create_dirs: bool = True,
    logger: Optional[ResilientLogger] = None
) -> bool:
    """
    Write `content` to `filepath` through a sibling temp file and an atomic rename,
    so a report or instance file is never left half written.

    Returns:
        bool: True if the file is in place, False otherwise
    """
    target = Path(filepath)
    tmp = target.with_name(f".{target.name}.tmp")
    try:
        if create_dirs:
            target.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, 'w', encoding=encoding, newline='') as f:
            f.write(content)
        os.replace(tmp, target)
        return True
    except OSError as e:
        if logger:
            logger.error(f"Could not write {filepath}: {e}", exc_info=True)
        tmp.unlink(missing_ok=True)
        return False


def safe_file_read(
    filepath: str,
    default: Optional[str] = "",
    encoding: str = 'utf-8',
    logger: Optional[ResilientLogger] = None
) -> Optional[str]:
    """Text of `filepath`, or `default` when it is missing or unreadable"""
    try:
        return Path(filepath).read_text(encoding=encoding)
    except (OSError, UnicodeDecodeError) as e:
        if logger:
            logger.warn(f"Could not read {filepath}: {e}")
        return default


def check_dependencies(modules: List[str], logger: Optional[ResilientLogger] = None) -> Tuple[List[str], List[str]]:
    """Split module names into (importable, missing)"""
    found = [m for m in modules if importlib.util.find_spec(m) is not None]
    absent = [m for m in modules if m not in found]
    if logger:
        for m in absent:
            logger.warn(f"Module {m} is not installed")
    return found, absent


if __name__ == "__main__":
    logger = ResilientLogger(__name__)

    assert safe_json_load("{broken", default={}) == {}
    assert safe_json_load(None, default=[]) == []
    assert safe_json_load('{"n": 4}') == {"n": 4}
    assert safe_file_read("/nonexistent/semionline.txt", default=None) is None

    found, absent = check_dependencies(["json", "definitely_not_a_module"])
    assert found == ["json"] and absent == ["definitely_not_a_module"]
    logger.info("resilience helpers ok")
