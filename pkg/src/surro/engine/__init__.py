"""Minimal reverse-mode differentiable engine on numpy float64 arrays."""
from . import functional
from .layers import (BatchNorm1d, Conv1d, ConvTranspose1d, Dropout, LayerNorm, Linear,
                     Module, MultiHeadAttention, Parameter, initialize)
from .optim import Adam, adam_step
from .tensor import Tensor, backward, no_grad

__all__ = [
    "Adam", "BatchNorm1d", "Conv1d", "ConvTranspose1d", "Dropout", "LayerNorm", "Linear",
    "Module", "MultiHeadAttention", "Parameter", "Tensor", "adam_step", "backward",
    "functional", "initialize", "no_grad",
]
