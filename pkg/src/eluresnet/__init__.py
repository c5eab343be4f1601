"""Residual networks with exponential linear units on a small numpy stack."""

from eluresnet.model import BlockVariant, Network, NetworkConfig, build_network
from eluresnet.optim import TrainSchedule, lr_at_epoch
from eluresnet.train import RunConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "BlockVariant",
    "Network",
    "NetworkConfig",
    "RunConfig",
    "TrainSchedule",
    "build_network",
    "evaluate",
    "lr_at_epoch",
    "train",
]
