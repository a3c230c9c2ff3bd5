"""Efficient-UNet inference engine: tensor ops, network construction,
weight containers, and the deterministic forward pass."""

from .model import (
    VARIANTS,
    NetworkSpec,
    StageSpec,
    Weights,
    build_efficient_unet,
    count_parameters,
    init_weights,
    iter_layers,
    mirse_forward,
    network_forward,
    rms_forward,
)
from .ops import conv2d, sigmoid, swish, transposed_conv2d
from .weights import (
    MagicMismatchError,
    ShapeMismatchError,
    TruncatedBlobError,
    WeightContainerError,
    load_tensor,
    load_weights,
    save_tensor,
    save_weights,
)

__all__ = [
    "VARIANTS",
    "NetworkSpec",
    "StageSpec",
    "Weights",
    "build_efficient_unet",
    "count_parameters",
    "init_weights",
    "iter_layers",
    "mirse_forward",
    "network_forward",
    "rms_forward",
    "conv2d",
    "transposed_conv2d",
    "sigmoid",
    "swish",
    "MagicMismatchError",
    "ShapeMismatchError",
    "TruncatedBlobError",
    "WeightContainerError",
    "load_weights",
    "save_weights",
    "load_tensor",
    "save_tensor",
]
