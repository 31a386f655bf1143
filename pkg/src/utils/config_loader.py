# src/utils/config_loader.py
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

import yaml

from src.errors import ConfigError

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent.parent / 'config.yaml'
OUT_DIR_ENV = 'RRAM_SIM_OUT_DIR'

# mappings stored whole under one dotted key
LEAF_MAPPINGS = {'sweep.axes'}


def _read_yaml(config_path: Path) -> Dict[str, Any]:
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Configuration file not found at: {config_path}")

    with open(config_path, 'r', encoding='utf-8') as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Error parsing YAML file {config_path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Top level of {config_path} must be a mapping of sections")
    return data


def flatten(tree: Dict[str, Any], prefix: str = '') -> Dict[str, Any]:
    """{'net': {'th': 0.6}} -> {'net.th': 0.6}"""
    flat = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict) and dotted not in LEAF_MAPPINGS:
            flat.update(flatten(value, prefix=f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def unflatten(flat: Dict[str, Any]) -> Dict[str, Any]:
    tree: Dict[str, Any] = {}
    for dotted, value in flat.items():
        section, _, key = dotted.partition('.')
        tree.setdefault(section, {})[key] = value
    return tree


def parse_override(text: str) -> Tuple[str, Any]:
    """'net.th=0.99' -> ('net.th', 0.99); the value is read as a YAML scalar."""
    key, sep, raw = text.partition('=')
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"Override '{text}' must have the form KEY=VALUE")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse value of override '{text}': {e}")
    if isinstance(value, str):
        # YAML 1.1 reads '1e-3' as a string
        try:
            value = float(value)
        except ValueError:
            pass
    return key, value


def merge(config: Dict[str, Any], updates: Dict[str, Any], source: str):
    for key, value in updates.items():
        if key not in config:
            raise ConfigError(f"Unknown config key '{key}' in {source}")
        config[key] = value


def load_config(config_path: Optional[Path] = None, overrides: Iterable[str] = ()) -> Dict[str, Any]:
    """
    Loads the root config.yaml defaults, then the optional overlay file, then
    KEY=VALUE overrides, and returns the flat dotted config.
    """
    config = flatten(_read_yaml(DEFAULT_CONFIG_PATH))
    if os.environ.get(OUT_DIR_ENV):
        config['out.dir'] = os.environ[OUT_DIR_ENV]

    if config_path is not None:
        merge(config, flatten(_read_yaml(Path(config_path))), str(config_path))

    for text in overrides:
        key, value = parse_override(text)
        merge(config, {key: value}, '--set')
    return config


def config_int(config: Dict[str, Any], key: str, minimum: int = 0, optional: bool = False) -> Optional[int]:
    """Reads a whole-number key; None is allowed only when `optional`."""
    value = config.get(key)
    if value is None and optional:
        return None
    try:
        whole = not isinstance(value, bool) and isinstance(value, (int, float)) and value == int(value)
    except (ValueError, OverflowError):
        whole = False
    if not whole or value < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def dump_config(config: Dict[str, Any], path: Path) -> Path:
    """Writes the effective config as a YAML overlay that reproduces the run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(unflatten(config), f, sort_keys=True, allow_unicode=True)
    return path
