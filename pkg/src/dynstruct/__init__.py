"""Dynamic structure optimization of neural networks with a complexity penalty.

Binary masks over hidden units or inter-layer connections are drawn from a
multivariate Bernoulli distribution whose parameters are trained by a
ranked stochastic natural gradient, jointly with the network weights.
"""
from .errors import ConfigError, DivergedError, FormatError
from .masked_net import Batch, MaskedTopology, WeightStore
from .relaxation import BernoulliTheta
from .trainer import TrainConfig, TrainHistory, train

__all__ = [
    "Batch",
    "BernoulliTheta",
    "ConfigError",
    "DivergedError",
    "FormatError",
    "MaskedTopology",
    "TrainConfig",
    "TrainHistory",
    "WeightStore",
    "train",
]
