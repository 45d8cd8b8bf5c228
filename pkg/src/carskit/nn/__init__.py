"""Autodiff engine, residual network and optimizer."""
from .network import Network, NetworkConfig, NetworkOutput, build_network, count_parameters
from .optim import Adam
from .tensor import Tensor, TapeError, parameter

__all__ = [
    "Adam",
    "Network",
    "NetworkConfig",
    "NetworkOutput",
    "TapeError",
    "Tensor",
    "build_network",
    "count_parameters",
    "parameter",
]
