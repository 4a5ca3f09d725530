from .config import ConfigError, TrainConfig, load_train_config, read_toml_table
from .ops import (
    DEFAULT_CONTENT_TAPS,
    LossWeights,
    StyleTargets,
    adain,
    build_style_targets,
    content_loss,
    gram,
    style_loss,
    total_loss,
)
from .optim import Adam
from .trainer import LossReport, Trainer, train

__all__ = [
    "ConfigError", "TrainConfig", "load_train_config", "read_toml_table",
    "DEFAULT_CONTENT_TAPS", "LossWeights", "StyleTargets", "adain",
    "build_style_targets", "content_loss", "gram", "style_loss", "total_loss",
    "Adam", "LossReport", "Trainer", "train",
]
