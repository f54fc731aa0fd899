"""Network definition, diagonal-Gaussian weight posterior, robustness specs.

Every network parameter lives at a fixed position in one flat vector of
length ``n_w``.  The flattening order is canonical across the whole package:
layers in order, and within a parameterized layer the weight tensor in
row-major (C) order followed by the bias vector.  Forward evaluation,
bound propagation, gradients, sampling and box construction all index into
this one vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "LayerSpec",
    "PosteriorParams",
    "NetworkDef",
    "WeightBox",
    "RobustnessSpec",
    "Certificate",
    "DrawRecord",
    "NetworkFormatError",
    "forward",
    "sample_weights",
    "make_classification_spec",
    "box_from_center",
    "load_network",
    "save_network",
]


class NetworkFormatError(ValueError):
    """Raised when a network interchange document is malformed."""


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the architecture: dense, conv2d, or relu."""

    kind: str
    in_dim: int = 0
    out_dim: int = 0
    in_ch: int = 0
    out_ch: int = 0
    kernel: int = 0
    stride: int = 1
    in_h: int = 0
    in_w: int = 0
    bayesian: bool = False
    has_bias: bool = True

    @staticmethod
    def dense(in_dim: int, out_dim: int, *, bayesian: bool = False, bias: bool = True) -> "LayerSpec":
        if in_dim <= 0 or out_dim <= 0:
            raise ValueError("dense layer dimensions must be positive")
        return LayerSpec("dense", in_dim=in_dim, out_dim=out_dim, bayesian=bayesian, has_bias=bias)

    @staticmethod
    def conv2d(in_ch: int, out_ch: int, kernel: int, stride: int, in_h: int, in_w: int,
               *, bayesian: bool = False, bias: bool = True) -> "LayerSpec":
        if min(in_ch, out_ch, kernel, stride, in_h, in_w) <= 0:
            raise ValueError("conv2d layer dimensions must be positive")
        if kernel > in_h or kernel > in_w:
            raise ValueError("conv2d kernel larger than its input")
        return LayerSpec("conv2d", in_ch=in_ch, out_ch=out_ch, kernel=kernel, stride=stride,
                         in_h=in_h, in_w=in_w, bayesian=bayesian, has_bias=bias)

    @staticmethod
    def relu() -> "LayerSpec":
        return LayerSpec("relu", has_bias=False)

    @property
    def out_hw(self) -> tuple[int, int]:
        oh = (self.in_h - self.kernel) // self.stride + 1
        ow = (self.in_w - self.kernel) // self.stride + 1
        return oh, ow

    def input_size(self) -> int:
        if self.kind == "dense":
            return self.in_dim
        if self.kind == "conv2d":
            return self.in_ch * self.in_h * self.in_w
        raise ValueError("relu layers have no fixed size")

    def output_size(self) -> int:
        if self.kind == "dense":
            return self.out_dim
        if self.kind == "conv2d":
            oh, ow = self.out_hw
            return self.out_ch * oh * ow
        raise ValueError("relu layers have no fixed size")

    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "dense":
            return (self.out_dim, self.in_dim)
        if self.kind == "conv2d":
            return (self.out_ch, self.in_ch, self.kernel, self.kernel)
        return ()

    def weight_count(self) -> int:
        return int(np.prod(self.weight_shape())) if self.kind != "relu" else 0

    def bias_count(self) -> int:
        if self.kind == "relu" or not self.has_bias:
            return 0
        return self.out_dim if self.kind == "dense" else self.out_ch


@dataclass(frozen=True)
class PosteriorParams:
    """Diagonal Gaussian over the flat parameter vector: N(mean, std**2)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen_array(self.mean))
        object.__setattr__(self, "std", _frozen_array(self.std))
        if self.mean.ndim != 1 or self.mean.shape != self.std.shape:
            raise ValueError("posterior mean and std must be 1-D vectors of equal length")
        if not np.all(np.isfinite(self.mean)) or not np.all(np.isfinite(self.std)):
            raise ValueError("posterior parameters must be finite")
        if np.any(self.std < 0):
            raise ValueError("posterior std must be non-negative")

    @property
    def size(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class _AffineMap:
    """Dense-matrix view of a parameterized layer.

    ``weight_idx[i, j]`` is the flat parameter index feeding output neuron i
    from input neuron j, or -1 for a structural zero.  ``bias_idx[i]`` is the
    bias parameter of output neuron i, or -1 when the layer has no bias.
    Conv layers repeat kernel/bias indices across spatial positions.
    """

    weight_idx: np.ndarray
    bias_idx: np.ndarray

    def materialize(self, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mat = np.where(self.weight_idx >= 0, flat[self.weight_idx], 0.0)
        bias = np.where(self.bias_idx >= 0, flat[self.bias_idx], 0.0)
        return mat, bias


def _dense_map(layer: LayerSpec, w_off: int, b_off: int) -> _AffineMap:
    idx = np.arange(layer.weight_count(), dtype=np.int64).reshape(layer.out_dim, layer.in_dim) + w_off
    if layer.has_bias:
        bias = np.arange(layer.out_dim, dtype=np.int64) + b_off
    else:
        bias = np.full(layer.out_dim, -1, dtype=np.int64)
    idx.flags.writeable = False
    bias.flags.writeable = False
    return _AffineMap(idx, bias)


def _conv_map(layer: LayerSpec, w_off: int, b_off: int) -> _AffineMap:
    oh, ow = layer.out_hw
    k, s = layer.kernel, layer.stride
    rows = layer.out_ch * oh * ow
    cols = layer.in_ch * layer.in_h * layer.in_w
    idx = np.full((rows, cols), -1, dtype=np.int64)
    bias = np.full(rows, -1, dtype=np.int64)
    for oc in range(layer.out_ch):
        for oy in range(oh):
            for ox in range(ow):
                row = (oc * oh + oy) * ow + ox
                if layer.has_bias:
                    bias[row] = b_off + oc
                for ic in range(layer.in_ch):
                    for ky in range(k):
                        for kx in range(k):
                            col = (ic * layer.in_h + oy * s + ky) * layer.in_w + ox * s + kx
                            idx[row, col] = w_off + ((oc * layer.in_ch + ic) * k + ky) * k + kx
    idx.flags.writeable = False
    bias.flags.writeable = False
    return _AffineMap(idx, bias)


@dataclass(frozen=True)
class NetworkDef:
    """Layer list plus the posterior over the flat parameter vector."""

    layers: tuple[LayerSpec, ...]
    posterior: PosteriorParams
    n_w: int = field(init=False)
    input_dim: int = field(init=False)
    output_dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        maps: list[Optional[_AffineMap]] = []
        offset = 0
        current: Optional[int] = None
        first_dim: Optional[int] = None
        prev_conv: Optional[LayerSpec] = None
        for pos, layer in enumerate(self.layers):
            if layer.kind == "relu":
                maps.append(None)
                continue
            need = layer.input_size()
            if current is None:
                first_dim = need
            elif current != need:
                raise ValueError(
                    f"layer {pos} expects input size {need} but receives {current}")
            if layer.kind == "conv2d" and prev_conv is not None and current is not None:
                oh, ow = prev_conv.out_hw
                if (layer.in_ch, layer.in_h, layer.in_w) != (prev_conv.out_ch, oh, ow):
                    raise ValueError(f"conv layer {pos} spatial shape does not chain")
            w_off = offset
            b_off = offset + layer.weight_count()
            maker = _dense_map if layer.kind == "dense" else _conv_map
            maps.append(maker(layer, w_off, b_off))
            offset = b_off + layer.bias_count()
            current = layer.output_size()
            prev_conv = layer if layer.kind == "conv2d" else None
        if first_dim is None or offset == 0:
            raise ValueError("network has no parameterized layers")
        if self.posterior.size != offset:
            raise ValueError(
                f"posterior has {self.posterior.size} parameters, network needs {offset}")
        for layer, amap in zip(self.layers, maps):
            if amap is None or layer.bayesian:
                continue
            sel = amap.weight_idx[amap.weight_idx >= 0]
            if np.any(self.posterior.std[sel] != 0):
                raise ValueError("deterministic layer has nonzero weight std")
            bsel = amap.bias_idx[amap.bias_idx >= 0]
            if bsel.size and np.any(self.posterior.std[bsel] != 0):
                raise ValueError("deterministic layer has nonzero bias std")
        object.__setattr__(self, "n_w", offset)
        object.__setattr__(self, "input_dim", first_dim)
        object.__setattr__(self, "output_dim", current)
        object.__setattr__(self, "_maps", tuple(maps))

    def walk(self):
        """Yield (layer, affine_map) pairs; the map is None for relu layers."""
        return zip(self.layers, self._maps)

    def affine_map(self, layer_index: int) -> _AffineMap:
        amap = self._maps[layer_index]
        if amap is None:
            raise ValueError("layer carries no parameters")
        return amap


def forward(net: NetworkDef, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the deterministic network f_w(x) exactly."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.shape != (net.n_w,):
        raise ValueError(f"weight vector has shape {w.shape}, expected ({net.n_w},)")
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.input_dim},)")
    h = x
    for layer, amap in net.walk():
        if layer.kind == "relu":
            h = np.maximum(h, 0.0)
        else:
            mat, bias = amap.materialize(w)
            h = mat @ h + bias
    return h


def sample_weights(posterior: PosteriorParams, rng: np.random.Generator) -> np.ndarray:
    """One draw from the diagonal Gaussian posterior."""
    return posterior.mean + posterior.std * rng.standard_normal(posterior.size)


@dataclass(frozen=True)
class WeightBox:
    """Axis-aligned orthotope [lower, upper] in parameter space."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen_array(self.lower))
        object.__setattr__(self, "upper", _frozen_array(self.upper))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("box bounds must be 1-D vectors of equal length")
        if np.any(self.lower > self.upper):
            raise ValueError("box lower bound exceeds upper bound")

    @property
    def size(self) -> int:
        return self.lower.size

    def contains(self, w: np.ndarray) -> bool:
        return bool(np.all(self.lower <= w) and np.all(w <= self.upper))


def box_from_center(w: np.ndarray, radius: np.ndarray) -> WeightBox:
    """Box [w - radius, w + radius]; radius must be non-negative."""
    w = np.asarray(w, dtype=np.float64)
    radius = np.asarray(radius, dtype=np.float64)
    if np.any(radius < 0):
        raise ValueError("box radius must be non-negative")
    return WeightBox(w - radius, w + radius)


@dataclass(frozen=True)
class RobustnessSpec:
    """Input l-inf ball around ``center`` plus output half-spaces a.y >= b.

    A weight w is safe when every input in the ball maps into every
    half-space.  ``clip`` optionally intersects the ball with a declared
    input domain such as (0, 1) for images.
    """

    center: np.ndarray
    epsilon: float
    halfspaces: tuple[tuple[np.ndarray, float], ...]
    clip: Optional[tuple[float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_array(self.center))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not self.halfspaces:
            raise ValueError("spec needs at least one half-space")
        fixed = []
        for a, b in self.halfspaces:
            a = _frozen_array(a)
            if not np.any(a != 0):
                raise ValueError("half-space normal must be non-zero")
            fixed.append((a, float(b)))
        object.__setattr__(self, "halfspaces", tuple(fixed))
        if self.clip is not None:
            lo, hi = self.clip
            if lo > hi:
                raise ValueError("clip domain is empty")
            object.__setattr__(self, "clip", (float(lo), float(hi)))


def make_classification_spec(x: np.ndarray, epsilon: float, label: int,
                             targets: Sequence[int], num_classes: int,
                             clip: Optional[tuple[float, float]] = None) -> RobustnessSpec:
    """Spec asserting class ``label`` beats every target class on the ball.

    One half-space per target t: logit[label] - logit[t] >= 0.
    """
    targets = list(targets)
    if not targets:
        raise ValueError("target class list must be non-empty")
    if label in targets:
        raise ValueError("label cannot be its own target")
    for t in [label, *targets]:
        if not 0 <= t < num_classes:
            raise ValueError(f"class {t} outside output dimension {num_classes}")
    halfspaces = []
    for t in targets:
        a = np.zeros(num_classes)
        a[label] = 1.0
        a[t] = -1.0
        halfspaces.append((a, 0.0))
    return RobustnessSpec(np.asarray(x, dtype=np.float64), epsilon, tuple(halfspaces), clip)


@dataclass(frozen=True)
class DrawRecord:
    """Per-draw certificate entry in center +- j*v form."""

    index: int
    center: np.ndarray
    v_minus: np.ndarray
    v_plus: np.ndarray
    j: int

    def box(self) -> WeightBox:
        return WeightBox(self.center - self.j * self.v_minus,
                         self.center + self.j * self.v_plus)

    def box_at(self, j: int) -> WeightBox:
        j = min(j, self.j)
        return WeightBox(self.center - j * self.v_minus,
                         self.center + j * self.v_plus)


@dataclass(frozen=True)
class Certificate:
    """A verified union of weight boxes and its posterior mass lower bound."""

    method: str
    boxes: tuple[WeightBox, ...]
    p_safe: float
    mass_method: str
    lbp_calls: int
    iterations: tuple[int, ...]
    draws: tuple[DrawRecord, ...]
    budget_truncated: bool
    seed: int
    params: dict
    timings: dict
    mass_ci99: Optional[float] = None
    mass_mc_estimate: Optional[float] = None

    def to_json_dict(self, include_boxes: bool = True) -> dict:
        doc = {
            "method": self.method,
            "p_safe": self.p_safe,
            "mass_method": self.mass_method,
            "lbp_calls": self.lbp_calls,
            "iterations": list(self.iterations),
            "budget_truncated": self.budget_truncated,
            "seed": self.seed,
            "params": dict(self.params),
        }
        if self.mass_ci99 is not None:
            doc["mass_ci99"] = self.mass_ci99
        if self.mass_mc_estimate is not None:
            doc["mass_mc_estimate"] = self.mass_mc_estimate
        if include_boxes:
            doc["boxes"] = [
                {
                    "index": d.index,
                    "center": d.center.tolist(),
                    "v_minus": d.v_minus.tolist(),
                    "v_plus": d.v_plus.tolist(),
                    "j": d.j,
                }
                for d in self.draws
            ]
        return doc


# ---------------------------------------------------------------------------
# Interchange format
# ---------------------------------------------------------------------------

def _parse_array(entry: dict, key: str, shape: tuple[int, ...], where: str,
                 required: bool) -> Optional[np.ndarray]:
    if key not in entry:
        if required:
            raise NetworkFormatError(f"{where}: missing '{key}'")
        return None
    try:
        arr = np.asarray(entry[key], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise NetworkFormatError(f"{where}: '{key}' is not a numeric array: {exc}") from None
    if arr.shape != shape:
        raise NetworkFormatError(f"{where}: '{key}' has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise NetworkFormatError(f"{where}: '{key}' contains non-finite values")
    return arr


def _require_int(entry: dict, key: str, where: str) -> int:
    if key not in entry:
        raise NetworkFormatError(f"{where}: missing '{key}'")
    value = entry[key]
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise NetworkFormatError(f"{where}: '{key}' must be a positive integer")
    return value


def _layer_from_entry(entry: dict, pos: int) -> tuple[LayerSpec, Optional[dict]]:
    where = f"layer {pos}"
    if not isinstance(entry, dict) or "type" not in entry:
        raise NetworkFormatError(f"{where}: expected an object with a 'type' field")
    kind = entry["type"]
    if kind == "relu":
        return LayerSpec.relu(), None
    bayesian = bool(entry.get("bayesian", False))
    if kind == "dense":
        in_dim = _require_int(entry, "in", where)
        out_dim = _require_int(entry, "out", where)
        spec = LayerSpec.dense(in_dim, out_dim, bayesian=bayesian,
                               bias="b_mean" in entry)
    elif kind == "conv2d":
        spec = LayerSpec.conv2d(
            _require_int(entry, "in_ch", where), _require_int(entry, "out_ch", where),
            _require_int(entry, "kernel", where), _require_int(entry, "stride", where),
            _require_int(entry, "in_h", where), _require_int(entry, "in_w", where),
            bayesian=bayesian, bias="b_mean" in entry)
    else:
        raise NetworkFormatError(f"{where}: unknown layer type '{kind}'")

    wshape = spec.weight_shape()
    bshape = (spec.bias_count(),)
    w_mean = _parse_array(entry, "w_mean", wshape, where, required=True)
    w_std = _parse_array(entry, "w_std", wshape, where, required=bayesian)
    if w_std is None:
        w_std = np.zeros(wshape)
    params = {"w_mean": w_mean, "w_std": w_std}
    if spec.has_bias:
        params["b_mean"] = _parse_array(entry, "b_mean", bshape, where, required=True)
        b_std = _parse_array(entry, "b_std", bshape, where, required=False)
        params["b_std"] = np.zeros(bshape) if b_std is None else b_std
    for key in ("w_std", "b_std"):
        if key in params and np.any(params[key] < 0):
            raise NetworkFormatError(f"{where}: '{key}' contains negative values")
    return spec, params


def load_network(path) -> NetworkDef:
    """Read a network from the JSON interchange format."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise NetworkFormatError(f"{path}: document must contain a 'layers' list")
    layers: list[LayerSpec] = []
    means: list[np.ndarray] = []
    stds: list[np.ndarray] = []
    for pos, entry in enumerate(doc["layers"]):
        spec, params = _layer_from_entry(entry, pos)
        layers.append(spec)
        if params is None:
            continue
        means.append(params["w_mean"].ravel())
        stds.append(params["w_std"].ravel())
        if spec.has_bias:
            means.append(params["b_mean"].ravel())
            stds.append(params["b_std"].ravel())
    if not means:
        raise NetworkFormatError(f"{path}: network has no parameterized layers")
    posterior = PosteriorParams(np.concatenate(means), np.concatenate(stds))
    try:
        return NetworkDef(tuple(layers), posterior)
    except ValueError as exc:
        raise NetworkFormatError(f"{path}: {exc}") from None


def save_network(net: NetworkDef, path) -> None:
    """Write a network in the JSON interchange format (full double precision)."""
    flat_mean = net.posterior.mean
    flat_std = net.posterior.std
    entries = []
    for layer, amap in net.walk():
        if layer.kind == "relu":
            entries.append({"type": "relu"})
            continue
        widx = amap.weight_idx
        lo = int(widx[widx >= 0].min())
        entry: dict = {"type": layer.kind}
        if layer.kind == "dense":
            entry["in"] = layer.in_dim
            entry["out"] = layer.out_dim
        else:
            entry.update({"in_ch": layer.in_ch, "out_ch": layer.out_ch,
                          "kernel": layer.kernel, "stride": layer.stride,
                          "in_h": layer.in_h, "in_w": layer.in_w})
        entry["bayesian"] = layer.bayesian
        shape = layer.weight_shape()
        count = layer.weight_count()
        entry["w_mean"] = flat_mean[lo:lo + count].reshape(shape).tolist()
        if layer.bayesian:
            entry["w_std"] = flat_std[lo:lo + count].reshape(shape).tolist()
        if layer.has_bias:
            b_lo = lo + count
            n_b = layer.bias_count()
            entry["b_mean"] = flat_mean[b_lo:b_lo + n_b].tolist()
            if layer.bayesian:
                entry["b_std"] = flat_std[b_lo:b_lo + n_b].tolist()
        entries.append(entry)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"layers": entries}, fh, indent=1)
        fh.write("\n")
