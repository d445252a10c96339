"""Minimal reverse-mode differentiable array engine."""

from .core import DTensor, Tape, as_tensor, backward, no_grad, precision
from .nn import Conv, ConvGRU, Module, Parameter, fan_in_uniform
from .ops import (
    abs,
    add,
    avg_pool2,
    channel_max,
    channel_mean,
    clip,
    concat,
    concat_channels,
    conv2d,
    div,
    exp,
    gather_pixels,
    getitem,
    max_pool2,
    mean,
    mul,
    neg,
    pad_replicate,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    reshape,
    sigmoid,
    sqrt,
    sub,
    sum,
    take_hw,
    tanh,
    transposed_conv2d,
)
from .optim import Adam, adam_step

__all__ = [
    "DTensor", "Tape", "Parameter", "Module", "Conv", "ConvGRU", "Adam",
    "as_tensor", "backward", "no_grad", "precision", "adam_step", "fan_in_uniform",
    "abs", "add", "avg_pool2", "channel_max", "channel_mean", "clip", "concat",
    "concat_channels", "conv2d", "div", "exp", "gather_pixels", "getitem", "max_pool2",
    "mean", "mul", "neg", "pad_replicate", "pixel_shuffle", "pixel_unshuffle", "relu",
    "reshape", "sigmoid", "sqrt", "sub", "sum", "take_hw", "tanh", "transposed_conv2d",
]
