"""Parameterised building blocks on top of the functional ops."""
from __future__ import annotations

import math

import numpy as np

from ..prng import SplitMix64, derive_seed
from . import functional as F
from .tensor import Tensor


class Parameter(Tensor):
    """Trainable tensor carrying its own Adam state."""

    __slots__ = ("adam_m", "adam_v", "step_count", "init_bound")

    def __init__(self, data, init_bound: float | None = None):
        super().__init__(data, requires_grad=True)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0
        self.init_bound = init_bound


class Module:
    training = True
    buffer_names: tuple = ()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name in self.buffer_names:
            yield prefix + name, getattr(self, name)
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def modules(self):
        yield self
        for _, child in self._children():
            yield from child.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)


def initialize(module: Module, seed: int) -> None:
    """Fill every parameter that declares an init bound with seeded
    uniform(-bound, bound) values; the stream is keyed by the parameter path."""
    for name, p in module.named_parameters():
        if p.init_bound is None:
            continue
        rng = SplitMix64(derive_seed(seed, "init", name))
        u = rng.uniform(p.data.size).reshape(p.shape)
        p.data = (2.0 * u - 1.0) * p.init_bound


def fan_in_bound(fan_in: int, nonlinearity: str) -> float:
    # He-uniform ahead of relu, LeCun-uniform otherwise
    gain = 6.0 if nonlinearity == "relu" else 3.0
    return math.sqrt(gain / fan_in)


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, nonlinearity: str = "relu"):
        self.weight = Parameter(np.zeros((fan_out, fan_in)), fan_in_bound(fan_in, nonlinearity))
        self.bias = Parameter(np.zeros(fan_out))

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, stride: int = 1,
                 padding="same", nonlinearity: str = "relu"):
        self.weight = Parameter(np.zeros((cout, cin, kernel)),
                                fan_in_bound(cin * kernel, nonlinearity))
        self.bias = Parameter(np.zeros(cout))
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose1d(Module):
    def __init__(self, cin: int, cout: int, kernel: int = 4, stride: int = 2,
                 nonlinearity: str = "relu"):
        fan_in = max(1, cin * kernel // stride)
        self.weight = Parameter(np.zeros((cin, cout, kernel)), fan_in_bound(fan_in, nonlinearity))
        self.bias = Parameter(np.zeros(cout))
        self.stride = stride

    def forward(self, x):
        return F.conv_transpose1d(x, self.weight, self.bias, self.stride)


class BatchNorm1d(Module):
    buffer_names = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    """Mask stream keyed by (seed, layer_id, step); the owner sets all three."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            from ..errors import InvalidArgument
            raise InvalidArgument(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.seed = 0
        self.layer_id = 0
        self.step = 0

    def forward(self, x):
        key = derive_seed(self.seed, "dropout", self.layer_id, self.step)
        return F.dropout(x, self.p, key, self.training)


class MultiHeadAttention(Module):
    def __init__(self, dim: int, heads: int):
        if heads < 1 or dim % heads:
            from ..errors import InvalidArgument
            raise InvalidArgument(f"embedding dim {dim} not divisible by {heads} heads")
        self.heads = heads
        bound = fan_in_bound(dim, "linear")
        for name in ("q", "k", "v", "o"):
            setattr(self, f"w{name}", Parameter(np.zeros((dim, dim)), bound))
            setattr(self, f"b{name}", Parameter(np.zeros(dim)))

    def forward(self, x):
        return F.multi_head_attention(x, self.heads, self.wq, self.bq, self.wk, self.bk,
                                      self.wv, self.bv, self.wo, self.bo)
