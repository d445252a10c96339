"""Parameters, a tiny module container and the layer blocks shared by the
super-sampling and interpolation networks."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import DimensionError
from . import ops
from .core import DTensor, default_dtype


class Parameter(DTensor):
    """A trainable tensor carrying its own Adam moment buffers."""

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=default_dtype()), requires_grad=True)
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def fan_in_uniform(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    """uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) with fan_in = prod(shape[1:])."""
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Module:
    """Walks attributes to collect named parameters, depth first in
    attribute definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self.named_parameters()}

    def assign_names(self):
        for n, p in self.named_parameters():
            p.name = n
        return self


class Conv(Module):
    def __init__(self, rng, c_in: int, c_out: int, k: int = 3, bias: bool = True):
        self.weight = Parameter(fan_in_uniform(rng, (c_out, c_in, k, k)))
        self.bias = Parameter(np.zeros(c_out, np.float32)) if bias else None
        self.k = k

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=1, padding=self.k // 2)

    @property
    def c_in(self):
        return self.weight.shape[1]

    @property
    def c_out(self):
        return self.weight.shape[0]


class ConvGRU(Module):
    """Convolutional GRU cell.

    z = σ(Wz[x, h]), r = σ(Wr[x, h]), ĥ = tanh(Wh[x, r⊙h]),
    h' = (1 - z)⊙h + z⊙ĥ.
    """

    def __init__(self, rng, c_x: int, c_h: int, k: int = 3):
        self.conv_z = Conv(rng, c_x + c_h, c_h, k)
        self.conv_r = Conv(rng, c_x + c_h, c_h, k)
        self.conv_h = Conv(rng, c_x + c_h, c_h, k)
        self.c_x = c_x
        self.c_h = c_h

    def __call__(self, x, h):
        if x.shape[-3] != self.c_x:
            raise DimensionError(f"GRU input has {x.shape[-3]} channels, expected {self.c_x}")
        if h.shape[-3] != self.c_h:
            raise DimensionError(f"GRU state has {h.shape[-3]} channels, expected {self.c_h}")
        xh = ops.concat_channels([x, h])
        z = ops.sigmoid(self.conv_z(xh))
        r = ops.sigmoid(self.conv_r(xh))
        hc = ops.tanh(self.conv_h(ops.concat_channels([x, ops.mul(r, h)])))
        return ops.add(ops.mul(ops.sub(1.0, z), h), ops.mul(z, hc))
