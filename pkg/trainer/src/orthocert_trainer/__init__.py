"""Variational-inference BNN trainer with interchange-format export."""

from .data import DatasetMissingError, load_mnist, make_toy2d
from .model import BNNClassifier, BayesianLinear
from .train import TrainConfig, export_network, train_vi

__version__ = "0.1.0"
