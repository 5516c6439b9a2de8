# src/settings.py
from __future__ import annotations

import json
import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict

from dotenv import load_dotenv

from .errors import ConfigurationError

try:
    import yaml
except Exception:
    yaml = None

load_dotenv(".env")

ROOT = Path(__file__).resolve().parents[1]

ARCH_CONFIG_PATH = os.getenv("CSIHAR_ARCH_CONFIG", str(ROOT / "config" / "architectures.yaml"))
PRESETS_PATH     = os.getenv("CSIHAR_PRESETS", str(ROOT / "config" / "presets.yaml"))
DATA_ROOT        = os.getenv("CSIHAR_DATA_ROOT", "./data")
LOG_LEVEL        = os.getenv("CSIHAR_LOG_LEVEL", "INFO")
THREADS          = int(os.getenv("CSIHAR_THREADS", "1"))   # 1 keeps training bit-reproducible

LOG_FORMAT = "%(asctime)s  %(levelname)-8s  %(message)s"


def _load_yaml_or_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        return {}
    if path.endswith((".yaml", ".yml")):
        if yaml is None:
            raise ConfigurationError("PyYAML not installed but YAML config provided.")
        with open(path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f) or {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


@lru_cache(maxsize=None)
def _cached_table(path: str) -> Dict[str, Any]:
    table = _load_yaml_or_json(path)
    if not table:
        raise ConfigurationError(f"configuration table missing or empty: {path}")
    return table


def load_presets() -> Dict[str, Any]:
    return _cached_table(PRESETS_PATH)


def load_architecture_table() -> Dict[str, Any]:
    return _cached_table(ARCH_CONFIG_PATH)


def preset_section(section: str, name: str) -> Dict[str, Any]:
    """One named entry of presets.yaml, e.g. preset_section("vae", "desk")."""
    entries = load_presets().get(section, {}) or {}
    if name not in entries:
        known = ", ".join(sorted(entries)) or "none"
        raise ConfigurationError(f"unknown {section} preset '{name}' (known: {known})")
    return dict(entries[name])


def resolve_data_path(path: str | os.PathLike) -> Path:
    # Relative paths that don't exist from the cwd are looked up under the data root
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    return Path(DATA_ROOT) / p


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
    )
