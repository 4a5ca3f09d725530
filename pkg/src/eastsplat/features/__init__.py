from .container import load_weights, save_weights
from .network import (
    DEFAULT_TAPS,
    ConvLayer,
    FeatureMaps,
    NetworkSpec,
    PoolLayer,
    ReluLayer,
    backward,
    channel_stats,
    conv2d,
    default_network,
    forward,
)
from .vgg16 import build_vgg16_shaped, convert_checkpoint

__all__ = [
    "DEFAULT_TAPS", "ConvLayer", "FeatureMaps", "NetworkSpec", "PoolLayer",
    "ReluLayer", "backward", "channel_stats", "conv2d", "default_network",
    "forward", "load_weights", "save_weights", "build_vgg16_shaped",
    "convert_checkpoint",
]
