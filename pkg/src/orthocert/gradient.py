"""Reverse-mode gradients of half-space margins, and the expansion geometry.

The sign partition of the margin gradient decides which dimensions get the
extra growth factor when boxes expand asymmetrically: positive-gradient and
zero-gradient dimensions push the upper face out further, negative and zero
push the lower face.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkDef, _frozen_array

__all__ = [
    "DimPartition",
    "ExpansionVectors",
    "grad_margin",
    "backward",
    "partition_dims",
    "expansion_vectors",
    "ZERO_GRAD_TOL",
]

# Absolute tolerance for treating a gradient entry as structurally zero;
# keeps float noise from evicting inactive-path dimensions from the free set.
ZERO_GRAD_TOL = 1e-12


@dataclass(frozen=True)
class DimPartition:
    """Disjoint index sets over the parameter dimensions by gradient sign."""

    neg: np.ndarray
    pos: np.ndarray
    zero: np.ndarray

    def __post_init__(self):
        for name in ("neg", "pos", "zero"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return self.neg.size + self.pos.size + self.zero.size


@dataclass(frozen=True)
class ExpansionVectors:
    """Per-dimension expansion steps below (v_minus) and above (v_plus)."""

    v_minus: np.ndarray
    v_plus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v_minus", _frozen_array(self.v_minus))
        object.__setattr__(self, "v_plus", _frozen_array(self.v_plus))


def backward(net: NetworkDef, w: np.ndarray, x: np.ndarray,
             out_grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of out_grad . f_w(x) with respect to (w, x).

    ReLU uses the subgradient 0 at the kink, so weights feeding an inactive
    node get an exactly-zero entry.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.shape != (net.n_w,):
        raise ValueError(f"weight vector has shape {w.shape}, expected ({net.n_w},)")
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.input_dim},)")

    h = x
    trace = []
    for layer, amap in net.walk():
        if layer.kind == "relu":
            trace.append(("relu", h > 0, None))
            h = np.maximum(h, 0.0)
        else:
            mat, bias = amap.materialize(w)
            trace.append(("affine", h, amap))
            h = mat @ h + bias

    grad_w = np.zeros(net.n_w)
    g = np.asarray(out_grad, dtype=np.float64)
    for kind, saved, amap in reversed(trace):
        if kind == "relu":
            g = g * saved
        else:
            h_in = saved
            gm = np.outer(g, h_in)
            valid = amap.weight_idx >= 0
            np.add.at(grad_w, amap.weight_idx[valid], gm[valid])
            bvalid = amap.bias_idx >= 0
            if np.any(bvalid):
                np.add.at(grad_w, amap.bias_idx[bvalid], g[bvalid])
            mat = np.where(valid, w[amap.weight_idx], 0.0)
            g = mat.T @ g
    return grad_w, g


def grad_margin(net: NetworkDef, w: np.ndarray, x: np.ndarray,
                a: np.ndarray) -> np.ndarray:
    """Exact reverse-mode gradient of the scalar a . f_w(x) in the weights."""
    grad_w, _ = backward(net, w, x, a)
    return grad_w


def partition_dims(grad: np.ndarray, zero_tol: float = ZERO_GRAD_TOL) -> DimPartition:
    """Split dimensions into negative / positive / zero gradient sets."""
    grad = np.asarray(grad, dtype=np.float64)
    zero = np.abs(grad) <= zero_tol
    return DimPartition(
        neg=np.where(~zero & (grad < 0))[0],
        pos=np.where(~zero & (grad > 0))[0],
        zero=np.where(zero)[0],
    )


def expansion_vectors(sigma: np.ndarray, scale: float, grad_scale: float,
                      part: DimPartition) -> ExpansionVectors:
    """Expansion steps scale*sigma, boosted by (1 + grad_scale) per the partition.

    The upper step grows on positive and zero dimensions, the lower step on
    negative and zero dimensions; zero-std dimensions stay degenerate.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if grad_scale < 0:
        raise ValueError("grad_scale must be non-negative")
    sigma = np.asarray(sigma, dtype=np.float64)
    base = scale * sigma
    boost = 1.0 + grad_scale
    v_plus = base.copy()
    v_minus = base.copy()
    v_plus[part.pos] *= boost
    v_plus[part.zero] *= boost
    v_minus[part.neg] *= boost
    v_minus[part.zero] *= boost
    return ExpansionVectors(v_minus=v_minus, v_plus=v_plus)
