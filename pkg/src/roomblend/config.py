"""Pipeline configuration and the key/value config-file grammar.

The config file is a flat TOML-like list of `key = value` lines: quoted
strings, integers, floats, true/false, and [comma, separated] lists.
Comments start with '#'. Flags given on the command line override file
values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import Optional

from . import ade20k

EXPORT_FORMATS = ("ply", "obj", "gltf")
DEFAULT_WEIGHTS = (0.6, 0.3, 0.0)  # layout, depth, semantic


@dataclass
class PipelineConfig:
    input_paths: list[str] = field(default_factory=list)
    diameter_m: float = 6.0
    seed: int = 0
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    backend_mode: str = "synthetic"
    endpoint: Optional[str] = None
    theme: str = ""
    output_path: str = "scene.ply"
    export_format: str = "ply"
    debug_dump: bool = False
    debug_dir: Optional[str] = None
    floor_label_ids: tuple[int, ...] = ade20k.DEFAULT_FLOOR_LABELS

    def validate(self) -> None:
        if self.diameter_m <= 0:
            raise ValueError("diameter must be positive")
        if len(self.weights) != 3 or any(not (0.0 <= w <= 1.0) for w in self.weights):
            raise ValueError("weights must be three values in [0, 1]")
        if self.backend_mode not in ("synthetic", "remote"):
            raise ValueError(f"unknown backend mode '{self.backend_mode}'")
        if self.backend_mode == "remote" and not self.endpoint:
            raise ValueError("remote backend mode requires an endpoint")
        if self.export_format not in EXPORT_FORMATS:
            raise ValueError(f"export format must be one of {EXPORT_FORMATS}")

    def content_hash(self) -> str:
        payload = asdict(self)
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True, default=str).encode()
        ).hexdigest()[:16]


def _parse_scalar(text: str):
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    if text[0] in "\"'":
        if len(text) < 2 or text[-1] != text[0]:
            raise ValueError(f"unterminated string: {text}")
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    raise ValueError(f"cannot parse value: {text}")


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if value.startswith("["):
            if not value.endswith("]"):
                raise ValueError(f"line {lineno}: unterminated list")
            inner = value[1:-1].strip()
            out[key] = [_parse_scalar(v) for v in inner.split(",")] if inner else []
        else:
            out[key] = _parse_scalar(value)
    return out


def load_config_file(path) -> dict:
    with open(path) as f:
        return parse_config_text(f.read())


def config_from_mapping(mapping: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    for key, value in mapping.items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown config key '{key}'")
        if key in ("weights", "floor_label_ids"):
            value = tuple(value)
        setattr(cfg, key, value)
    return cfg
