"""The 1-D residual network shared by every neural UQ method.

The architecture is a pure function of a name -> weight-tensor mapping, so
the same forward pass serves point-estimate weights (plain parameters) and
variational weights (reparameterized samples built on the tape).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, NamedTuple

import numpy as np

from ..errors import ConfigError
from . import tensor as T
from .tensor import Tensor

HEAD_NAMES = ("raman", "nrb")


@dataclass(frozen=True)
class NetworkConfig:
    n_blocks: int = 4
    width: int = 32
    kernel_size: int = 5
    dropout_p: float = 0.1
    variance_head: bool = False

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ConfigError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.width < 1:
            raise ConfigError(f"width must be >= 1, got {self.width}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be a positive odd number, got {self.kernel_size}")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")

    def to_dict(self) -> dict:
        return asdict(self)


class NetworkOutput(NamedTuple):
    raman: Tensor  # (B, L), squashed into [0, 1]
    nrb: Tensor  # (B, L), nonnegative
    variance: Tensor | None  # (B, L) heteroscedastic variance, if the head exists


def parameter_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    w, k = config.width, config.kernel_size
    shapes = {"stem.w": (w, 1, k), "stem.b": (w,)}
    for i in range(config.n_blocks):
        for j in (1, 2):
            shapes[f"block{i}.conv{j}.w"] = (w, w, k)
            shapes[f"block{i}.conv{j}.b"] = (w,)
    heads = HEAD_NAMES + (("logvar",) if config.variance_head else ())
    for h in heads:
        shapes[f"head.{h}.w"] = (1, w, 1)
        shapes[f"head.{h}.b"] = (1,)
    return shapes


def head_parameter_names(config: NetworkConfig) -> list[str]:
    return [n for n in parameter_shapes(config) if n.startswith("head.")]


def count_parameters(config: NetworkConfig) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(config).values())


def init_parameters(config: NetworkConfig, rng: np.random.Generator, zero_heads: bool = False) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases."""
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".b") or (zero_heads and name.startswith("head.")):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[1] * shape[2]
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def forward(
    config: NetworkConfig,
    weights: Mapping[str, Tensor],
    x: Tensor,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> NetworkOutput:
    """Run the network on a (B, L) batch of CARS spectra."""
    B, L = x.shape
    h = T.reshape(x, (B, 1, L))
    h = T.relu(T.conv1d(h, weights["stem.w"], weights["stem.b"]))
    for i in range(config.n_blocks):
        r = T.relu(T.conv1d(h, weights[f"block{i}.conv1.w"], weights[f"block{i}.conv1.b"]))
        r = T.conv1d(r, weights[f"block{i}.conv2.w"], weights[f"block{i}.conv2.b"])
        h = T.dropout(h + r, config.dropout_p, training, rng)

    def head(name):
        out = T.conv1d(h, weights[f"head.{name}.w"], weights[f"head.{name}.b"])
        return T.reshape(out, (B, L))

    raman = T.sigmoid(head("raman"))
    nrb = T.softplus(head("nrb"))
    variance = None
    if config.variance_head:
        variance = T.softplus(head("logvar")) + 1e-6
    return NetworkOutput(raman, nrb, variance)


class Network:
    """A network instance owning its (point-estimate) parameters."""

    def __init__(self, config: NetworkConfig, params: Mapping[str, np.ndarray]):
        self.config = config
        shapes = parameter_shapes(config)
        if set(params) != set(shapes):
            raise ConfigError("parameter names do not match the network configuration")
        self.params = {n: T.parameter(params[n], name=n) for n in shapes}

    def __call__(self, x, training: bool = False, rng=None) -> NetworkOutput:
        return forward(self.config, self.params, T.as_tensor(x), training, rng)

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self.params.items()}


def build_network(config: NetworkConfig, rng: np.random.Generator, zero_heads: bool = False) -> Network:
    return Network(config, init_parameters(config, rng, zero_heads))
