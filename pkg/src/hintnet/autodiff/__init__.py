"""Minimal reverse-mode autodiff: tensors, layers and Adam."""

from .layers import MLP, Conv2d, ConvBlock, Dense, Module
from .optim import Adam, AdamState, adam_step
from .tensor import (
    GraphError,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    conv2d,
    dense,
    exp,
    global_avg_pool,
    is_grad_enabled,
    matmul,
    max_pool2d,
    mean,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    sqrt,
    sub,
    take,
    tsum,
)

__all__ = [
    "Adam",
    "AdamState",
    "Conv2d",
    "ConvBlock",
    "Dense",
    "GraphError",
    "MLP",
    "Module",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "conv2d",
    "dense",
    "exp",
    "global_avg_pool",
    "is_grad_enabled",
    "matmul",
    "max_pool2d",
    "mean",
    "mul",
    "no_grad",
    "power",
    "relu",
    "reshape",
    "sqrt",
    "sub",
    "take",
    "tsum",
]
