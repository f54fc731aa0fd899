"""Variational-inference training loop and the interchange-format exporter."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .data import load_mnist, make_toy2d
from .model import BNNClassifier

__all__ = ["TrainConfig", "train_vi", "export_network"]

_DATASET_SHAPES = {"toy2d": (2, 2), "mnist": (784, 10)}


@dataclass
class TrainConfig:
    dataset: str = "toy2d"
    hidden_layers: int = 1
    hidden_units: int = 8
    epochs: int = 20
    lr: float = 0.001
    prior_std: float = 1.0
    seed: int = 0
    batch_size: int = 128
    kl_scale: float = 1.0
    data_dir: str = "data"
    export_path: Optional[str] = None
    toy_points: int = 400

    def __post_init__(self):
        if self.dataset not in _DATASET_SHAPES:
            raise ValueError(f"unknown dataset '{self.dataset}'")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.prior_std <= 0:
            raise ValueError("prior std must be positive")

    @property
    def arch_name(self) -> str:
        return f"{self.hidden_layers}x{self.hidden_units}"


def _load_dataset(config: TrainConfig):
    if config.dataset == "toy2d":
        xs, ys = make_toy2d(config.toy_points, seed=config.seed)
    else:
        xs, ys = load_mnist(config.data_dir, "train")
    return torch.from_numpy(np.ascontiguousarray(xs)), torch.from_numpy(np.ascontiguousarray(ys))


def train_vi(config: TrainConfig):
    """Train by maximizing the ELBO: one reparameterized sample per batch,
    KL against the prior weighted by kl_scale / num_batches.

    Returns (model, metrics).  Deterministic for a fixed seed on CPU.
    """
    torch.manual_seed(config.seed)
    xs, ys = _load_dataset(config)
    in_dim, classes = _DATASET_SHAPES[config.dataset]
    model = BNNClassifier(in_dim, config.hidden_units, config.hidden_layers,
                          classes, config.prior_std)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    n = xs.shape[0]
    num_batches = max(1, (n + config.batch_size - 1) // config.batch_size)
    kl_weight = config.kl_scale / num_batches

    generator = torch.Generator().manual_seed(config.seed)
    for _ in range(config.epochs):
        perm = torch.randperm(n, generator=generator)
        for b in range(num_batches):
            idx = perm[b * config.batch_size:(b + 1) * config.batch_size]
            logits = model(xs[idx], sample=True)
            nll = torch.nn.functional.cross_entropy(logits, ys[idx], reduction="sum")
            loss = nll + kl_weight * model.kl()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    metrics = {
        "train_accuracy": model.mean_accuracy(xs, ys),
        "final_loss": float(loss.detach()),
        "architecture": config.arch_name,
        "n_train": int(n),
    }
    if config.export_path:
        export_network(model, config.export_path)
    return model, metrics


def export_network(model: BNNClassifier, path) -> None:
    """Write the trained posterior in the verifier's interchange JSON format.

    One dense entry per Bayesian layer with a relu entry between hidden
    layers; field order is fixed so identical posteriors give identical files.
    """
    entries = []
    n_layers = len(model.layers)
    for i, layer in enumerate(model.layers):
        entry = {
            "type": "dense",
            "in": layer.in_features,
            "out": layer.out_features,
            "bayesian": True,
            "w_mean": layer.w_mu.detach().numpy().tolist(),
            "w_std": layer.w_std.detach().numpy().tolist(),
            "b_mean": layer.b_mu.detach().numpy().tolist(),
            "b_std": layer.b_std.detach().numpy().tolist(),
        }
        entries.append(entry)
        if i < n_layers - 1:
            entries.append({"type": "relu"})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"layers": entries}, fh, indent=1)
        fh.write("\n")
