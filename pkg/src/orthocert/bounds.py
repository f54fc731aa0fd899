"""Sound output bounds for networks with interval weights and interval inputs.

Two modes behind one interface: plain interval propagation (ibp) and a
linear bound propagation (lbp) that carries affine lower/upper bounds in the
input variables through the layers.  Both are sound: the true output of any
weight in the box on any input in the ball lies inside the returned bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .network import NetworkDef, RobustnessSpec, WeightBox, _frozen_array

__all__ = [
    "BoundBox",
    "VerifierConfig",
    "SAFE",
    "UNKNOWN",
    "input_box",
    "ibp_bounds",
    "lbp_bounds",
    "verify_box",
]

SAFE = "safe"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class BoundBox:
    """Element-wise output interval."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen_array(self.lower))
        object.__setattr__(self, "upper", _frozen_array(self.upper))
        if np.any(self.lower > self.upper):
            raise ValueError("bound box lower exceeds upper")

    def contains(self, y: np.ndarray) -> bool:
        return bool(np.all(self.lower <= y) and np.all(y <= self.upper))


@dataclass
class VerifierConfig:
    """Verifier mode plus a monotone counter of verify_box invocations."""

    mode: str = "ibp"
    calls: int = 0

    def __post_init__(self):
        if self.mode not in ("ibp", "lbp"):
            raise ValueError(f"unknown verifier mode '{self.mode}'")


def input_box(spec: RobustnessSpec) -> tuple[np.ndarray, np.ndarray]:
    """The input l-inf ball [x - eps, x + eps], clipped to the domain if set."""
    lo = spec.center - spec.epsilon
    hi = spec.center + spec.epsilon
    if spec.clip is not None:
        lo = np.maximum(lo, spec.clip[0])
        hi = np.minimum(hi, spec.clip[1])
    return lo, hi


def _interval_affine(mat_lo, mat_hi, bias_lo, bias_hi, h_lo, h_hi):
    # Exact per-term interval product: min/max over the four endpoint
    # products of each weight interval with each activation interval.
    cands = np.stack([mat_lo * h_lo, mat_lo * h_hi, mat_hi * h_lo, mat_hi * h_hi])
    lo = cands.min(axis=0).sum(axis=1) + bias_lo
    hi = cands.max(axis=0).sum(axis=1) + bias_hi
    return lo, hi


def _layer_intervals(amap, wbox: WeightBox):
    widx, bidx = amap.weight_idx, amap.bias_idx
    mat_lo = np.where(widx >= 0, wbox.lower[widx], 0.0)
    mat_hi = np.where(widx >= 0, wbox.upper[widx], 0.0)
    bias_lo = np.where(bidx >= 0, wbox.lower[bidx], 0.0)
    bias_hi = np.where(bidx >= 0, wbox.upper[bidx], 0.0)
    return mat_lo, mat_hi, bias_lo, bias_hi


def ibp_bounds(net: NetworkDef, wbox: WeightBox, ibox) -> BoundBox:
    """Interval bound propagation over weight box and input box."""
    h_lo, h_hi = np.asarray(ibox[0], dtype=np.float64), np.asarray(ibox[1], dtype=np.float64)
    for layer, amap in net.walk():
        if layer.kind == "relu":
            h_lo = np.maximum(h_lo, 0.0)
            h_hi = np.maximum(h_hi, 0.0)
        else:
            h_lo, h_hi = _interval_affine(*_layer_intervals(amap, wbox), h_lo, h_hi)
    return BoundBox(h_lo, h_hi)


class _LinearState:
    """Affine bounds A_l x + c_l <= h <= A_u x + c_u plus concrete ranges."""

    __slots__ = ("a_lo", "c_lo", "a_hi", "c_hi", "r_lo", "r_hi", "x_lo", "x_hi")

    def __init__(self, x_lo, x_hi):
        n = x_lo.size
        self.a_lo = np.eye(n)
        self.a_hi = np.eye(n)
        self.c_lo = np.zeros(n)
        self.c_hi = np.zeros(n)
        self.r_lo = x_lo.copy()
        self.r_hi = x_hi.copy()
        self.x_lo = x_lo
        self.x_hi = x_hi

    def concretize(self):
        ap, an = np.maximum(self.a_hi, 0.0), np.minimum(self.a_hi, 0.0)
        self.r_hi = ap @ self.x_hi + an @ self.x_lo + self.c_hi
        ap, an = np.maximum(self.a_lo, 0.0), np.minimum(self.a_lo, 0.0)
        self.r_lo = ap @ self.x_lo + an @ self.x_hi + self.c_lo


def _lbp_affine(state: _LinearState, mat_lo, mat_hi, bias_lo, bias_hi):
    # Resolve each interval weight column against the sign of its input
    # activation range: definite-sign activations pick one endpoint of the
    # weight interval; sign-straddling activations fall back to the interval
    # midpoint with a constant radius slack.
    r_lo, r_hi = state.r_lo, state.r_hi
    pos = r_lo >= 0
    neg = r_hi <= 0
    straddle = ~(pos | neg)

    up = np.where(pos[None, :], mat_hi, np.where(neg[None, :], mat_lo, 0.0))
    lo = np.where(pos[None, :], mat_lo, np.where(neg[None, :], mat_hi, 0.0))
    slack = np.zeros(mat_lo.shape[0])
    if np.any(straddle):
        center = 0.5 * (mat_lo[:, straddle] + mat_hi[:, straddle])
        radius = 0.5 * (mat_hi[:, straddle] - mat_lo[:, straddle])
        up[:, straddle] = center
        lo[:, straddle] = center
        slack = radius @ np.maximum(np.abs(r_lo[straddle]), np.abs(r_hi[straddle]))

    up_p, up_n = np.maximum(up, 0.0), np.minimum(up, 0.0)
    lo_p, lo_n = np.maximum(lo, 0.0), np.minimum(lo, 0.0)
    new = _LinearState.__new__(_LinearState)
    new.x_lo, new.x_hi = state.x_lo, state.x_hi
    new.a_hi = up_p @ state.a_hi + up_n @ state.a_lo
    new.c_hi = up_p @ state.c_hi + up_n @ state.c_lo + bias_hi + slack
    new.a_lo = lo_p @ state.a_lo + lo_n @ state.a_hi
    new.c_lo = lo_p @ state.c_lo + lo_n @ state.c_hi + bias_lo - slack
    new.concretize()
    return new


def _lbp_relu(state: _LinearState):
    # Triangle relaxation on unstable neurons: chord slope u/(u-l) above,
    # adaptive 0/1 slope below.  Stable neurons pass through or zero out.
    l, u = state.r_lo, state.r_hi
    dead = u <= 0
    unstable = (~dead) & (l < 0)
    if np.any(dead):
        for arr in (state.a_lo, state.a_hi):
            arr[dead, :] = 0.0
        state.c_lo[dead] = 0.0
        state.c_hi[dead] = 0.0
    if np.any(unstable):
        s = u[unstable] / (u[unstable] - l[unstable])
        state.a_hi[unstable, :] *= s[:, None]
        state.c_hi[unstable] = s * (state.c_hi[unstable] - l[unstable])
        keep = u[unstable] >= -l[unstable]
        alpha = np.where(keep, 1.0, 0.0)
        state.a_lo[unstable, :] *= alpha[:, None]
        state.c_lo[unstable] *= alpha
    state.r_lo = np.maximum(l, 0.0)
    state.r_hi = np.maximum(u, 0.0)
    return state


def lbp_bounds(net: NetworkDef, wbox: WeightBox, ibox) -> BoundBox:
    """Linear bound propagation over weight box and input box."""
    x_lo = np.asarray(ibox[0], dtype=np.float64)
    x_hi = np.asarray(ibox[1], dtype=np.float64)
    state = _LinearState(x_lo, x_hi)
    for layer, amap in net.walk():
        if layer.kind == "relu":
            state = _lbp_relu(state)
        else:
            state = _lbp_affine(state, *_layer_intervals(amap, wbox))
    return BoundBox(state.r_lo, state.r_hi)


def halfspace_lower(a: np.ndarray, box: BoundBox) -> float:
    """Minimum of a.y over the output box, by sign-matching box faces."""
    return float(np.maximum(a, 0.0) @ box.lower + np.minimum(a, 0.0) @ box.upper)


def verify_box(net: NetworkDef, wbox: WeightBox, spec: RobustnessSpec,
               cfg: VerifierConfig) -> str:
    """SAFE iff the propagated bounds satisfy every half-space of the spec.

    Counts as exactly one verifier call regardless of how many half-spaces
    the spec carries.
    """
    cfg.calls += 1
    propagate = ibp_bounds if cfg.mode == "ibp" else lbp_bounds
    out = propagate(net, wbox, input_box(spec))
    for a, b in spec.halfspaces:
        if halfspace_lower(a, out) < b:
            return UNKNOWN
    return SAFE
