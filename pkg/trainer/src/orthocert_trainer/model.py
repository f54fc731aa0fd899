"""Bayes-by-backprop layers and the fully-connected BNN classifier.

Each weight has a learned mean and a softplus-parameterized standard
deviation; forward passes draw one reparameterized sample per call, and the
KL term against the N(0, prior_std^2) prior is available in closed form.
Everything runs in float64 so exported posteriors agree with independent
evaluations to machine precision.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

__all__ = ["BayesianLinear", "BNNClassifier"]


class BayesianLinear(nn.Module):
    def __init__(self, in_features: int, out_features: int, prior_std: float = 1.0):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.prior_std = prior_std
        self.w_mu = nn.Parameter(torch.empty(out_features, in_features, dtype=torch.float64))
        self.w_rho = nn.Parameter(torch.empty(out_features, in_features, dtype=torch.float64))
        self.b_mu = nn.Parameter(torch.empty(out_features, dtype=torch.float64))
        self.b_rho = nn.Parameter(torch.empty(out_features, dtype=torch.float64))
        nn.init.normal_(self.w_mu, 0.0, 1.0 / math.sqrt(in_features))
        nn.init.constant_(self.w_rho, -5.0)
        nn.init.normal_(self.b_mu, 0.0, 0.1)
        nn.init.constant_(self.b_rho, -5.0)

    @property
    def w_std(self) -> torch.Tensor:
        return F.softplus(self.w_rho)

    @property
    def b_std(self) -> torch.Tensor:
        return F.softplus(self.b_rho)

    def forward(self, x: torch.Tensor, sample: bool = True) -> torch.Tensor:
        if not sample:
            return F.linear(x, self.w_mu, self.b_mu)
        w = self.w_mu + self.w_std * torch.randn_like(self.w_mu)
        b = self.b_mu + self.b_std * torch.randn_like(self.b_mu)
        return F.linear(x, w, b)

    def kl(self) -> torch.Tensor:
        def gauss_kl(mu, std):
            var = std * std
            prior_var = self.prior_std ** 2
            return (torch.log(self.prior_std / std) + (var + mu * mu) / (2 * prior_var) - 0.5).sum()
        return gauss_kl(self.w_mu, self.w_std) + gauss_kl(self.b_mu, self.b_std)


class BNNClassifier(nn.Module):
    """ReLU MLP with Bayesian linear layers: in -> hidden x depth -> classes."""

    def __init__(self, in_dim: int, hidden: int, depth: int, classes: int,
                 prior_std: float = 1.0):
        super().__init__()
        dims = [in_dim] + [hidden] * depth + [classes]
        self.layers = nn.ModuleList(
            BayesianLinear(dims[i], dims[i + 1], prior_std) for i in range(len(dims) - 1))

    def forward(self, x: torch.Tensor, sample: bool = True) -> torch.Tensor:
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(h, sample=sample)
            if i < len(self.layers) - 1:
                h = torch.relu(h)
        return h

    def kl(self) -> torch.Tensor:
        return sum(layer.kl() for layer in self.layers)

    def mean_accuracy(self, x: torch.Tensor, y: torch.Tensor) -> float:
        with torch.no_grad():
            pred = self.forward(x, sample=False).argmax(dim=1)
        return float((pred == y).double().mean())
