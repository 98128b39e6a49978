"""Flat dotted-key scenario configuration files.

One human-readable text file fully determines a run.  Each non-comment
line is ``dotted.key = value`` with JSON-typed values (numbers, strings,
booleans, lists); ``#`` starts a comment.  Serialization writes keys in
sorted order, so parse -> serialize -> parse is the identity up to
comments and key order.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def loads(text: str) -> dict:
    config = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in config:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        config[key] = parse_value(value)
    return config


def load(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text())


def dumps(config: dict) -> str:
    lines = [f"{key} = {json.dumps(config[key])}" for key in sorted(config)]
    return "\n".join(lines) + "\n"


def dump(path, config: dict) -> None:
    Path(path).write_text(dumps(config))


def get(config: dict, key: str, default=None, required: bool = False):
    if key in config:
        return config[key]
    if required:
        raise ConfigError(f"missing required config key {key!r}")
    return default


def get_typed(config: dict, key: str, kind, default=None, required: bool = False):
    value = get(config, key, default=default, required=required)
    if value is None:
        return None
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
        return value
    if not isinstance(value, kind):
        raise ConfigError(f"config key {key!r} must be {kind.__name__}, got {value!r}")
    return value
