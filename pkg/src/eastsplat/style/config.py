"""Training configuration and its TOML-convention file format.

Python 3.10 has no stdlib TOML reader and the build environment pins no
third-party one, so a small subset parser lives here: comments, [sections]
(flattened), strings, ints, floats, booleans, and flat arrays. That covers
every config file this package documents.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from ..errors import EastsplatError


class ConfigError(EastsplatError):
    pass


@dataclass
class TrainConfig:
    phase1_iters: int = 400
    phase2_iters: int = 300
    lr_position: float = 2e-4
    lr_log_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_opacity: float = 5e-2
    lr_sh: float = 2.5e-3
    w_content: float = 1.0
    w_style: float = 10.0
    prune_every: int = 500
    prune_opacity_below: float = 0.005
    split_every: int = 0
    split_scale_threshold: float = 0.08
    snapshot_every: int = 0
    seed: int = 0
    image_scale: float = 1.0
    background: tuple = (1.0, 1.0, 1.0)
    content_target_mode: str = "adain"  # or "original"

    def validate(self) -> None:
        if self.phase1_iters < 0 or self.phase2_iters < 0:
            raise ConfigError("iteration counts must be >= 0")
        for name in ("lr_position", "lr_log_scale", "lr_rotation", "lr_opacity", "lr_sh"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.w_content < 0 or self.w_style < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.w_content == 0 and self.w_style == 0:
            raise ConfigError("at least one loss weight must be positive")
        if not 0.0 < self.image_scale <= 1.0:
            raise ConfigError("image_scale must be in (0, 1]")
        if self.content_target_mode not in ("adain", "original"):
            raise ConfigError("content_target_mode must be 'adain' or 'original'")
        if len(self.background) != 3:
            raise ConfigError("background must have 3 components")


def _parse_value(text: str, path, lineno):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(v, path, lineno) for v in inner.split(",")]
    if (text.startswith('"') and text.endswith('"')) or \
            (text.startswith("'") and text.endswith("'")):
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
        raise ConfigError(f"{path}:{lineno}: cannot parse value {text!r}")


def read_toml_table(path) -> dict:
    """Flat key/value view of a TOML-subset file; section names are dropped."""
    out = {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file does not exist: {path}")
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            continue  # single flat namespace
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value, path, lineno)
    return out


def load_train_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Build a TrainConfig from an optional file plus CLI overrides."""
    known = {f.name for f in fields(TrainConfig)}
    values = {}
    if path is not None:
        for key, value in read_toml_table(path).items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    if "background" in values:
        values["background"] = tuple(float(v) for v in values["background"])
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg
