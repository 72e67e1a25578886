"""
Configuration Loader

Loads config.yml with environment variable overrides. Every algorithm module
reads its tolerances and defaults through here, falling back to built-in
values when the loader cannot be imported.
"""

import os
import yaml
from pathlib import Path
from typing import Any, Dict, Optional
from dataclasses import dataclass, field

from dotenv import load_dotenv

load_dotenv()


@dataclass
class Config:
    """Main configuration class"""
    logging: Dict[str, Any] = field(default_factory=dict)
    experiment: Dict[str, Any] = field(default_factory=dict)
    tolerances: Dict[str, Any] = field(default_factory=dict)
    generators: Dict[str, Any] = field(default_factory=dict)
    set_systems: Dict[str, Any] = field(default_factory=dict)
    qp: Dict[str, Any] = field(default_factory=dict)


class ConfigLoader:
    """Load and manage configuration"""

    def __init__(self, config_path: Optional[Path] = None):
        env_path = os.getenv("SEMIONLINE_CONFIG")
        self.config_path = config_path or (
            Path(env_path) if env_path else Path(__file__).parent.parent / "config.yml"
        )
        self._config: Optional[Config] = None

    def load(self) -> Config:
        """Load configuration from file and environment"""
        if self._config:
            return self._config

        config_dict: Dict[str, Any] = {}
        if self.config_path.exists():
            with open(self.config_path, encoding="utf-8") as f:
                config_dict = yaml.safe_load(f) or {}

        config_dict = self._apply_env_overrides(config_dict)
        self._config = self._dict_to_config(config_dict)

        return self._config

    def _apply_env_overrides(self, config_dict: Dict) -> Dict:
        """Apply environment variable overrides"""

        if level := os.getenv("SEMIONLINE_LOG_LEVEL"):
            config_dict.setdefault("LOGGING", {})["level"] = level.upper()

        if log_file := os.getenv("SEMIONLINE_LOG_FILE"):
            file_cfg = config_dict.setdefault("LOGGING", {}).setdefault("file", {})
            file_cfg["enabled"] = True
            file_cfg["path"] = log_file

        if workers := os.getenv("SEMIONLINE_WORKERS"):
            try:
                config_dict.setdefault("EXPERIMENT", {})["workers"] = int(workers)
            except ValueError:
                pass

        if seed := os.getenv("SEMIONLINE_MASTER_SEED"):
            try:
                config_dict.setdefault("EXPERIMENT", {})["master_seed"] = int(seed)
            except ValueError:
                pass

        return config_dict

    def _dict_to_config(self, config_dict: Dict) -> Config:
        """Convert dictionary to Config object"""
        return Config(
            logging=config_dict.get("LOGGING", {}) or {},
            experiment=config_dict.get("EXPERIMENT", {}) or {},
            tolerances=config_dict.get("TOLERANCES", {}) or {},
            generators=config_dict.get("GENERATORS", {}) or {},
            set_systems=config_dict.get("SET_SYSTEMS", {}) or {},
            qp=config_dict.get("QP", {}) or {},
        )

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by dot-notation key"""
        if not self._config:
            self.load()

        parts = key.split(".")
        value: Any = self._config.__dict__

        for part in parts:
            if isinstance(value, dict):
                if part not in value:
                    return default
                value = value[part]
            elif hasattr(value, part):
                value = getattr(value, part)
            else:
                return default

        return value


# Global config instance
_config_loader = ConfigLoader()


def get_config() -> Config:
    """Get global configuration instance"""
    return _config_loader.load()


def get(key: str, default: Any = None) -> Any:
    """Get configuration value by key"""
    return _config_loader.get(key, default)


def get_tolerance(name: str, default: float) -> float:
    """Numeric tolerance from the TOLERANCES section"""
    return float(get(f"tolerances.{name}", default))


def get_workers() -> int:
    """Worker count for parallel trials; 0 or missing means all cores"""
    workers = int(get("experiment.workers", 0) or 0)
    return workers if workers > 0 else (os.cpu_count() or 1)
