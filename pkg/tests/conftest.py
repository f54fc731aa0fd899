import numpy as np
import pytest

from orthocert import LayerSpec, NetworkDef, PosteriorParams, RobustnessSpec


def make_example1():
    """Two 1x1 bayesian dense layers, ReLU between and after, N(0, I) posterior."""
    layers = (
        LayerSpec.dense(1, 1, bayesian=True, bias=False),
        LayerSpec.relu(),
        LayerSpec.dense(1, 1, bayesian=True, bias=False),
        LayerSpec.relu(),
    )
    return NetworkDef(layers, PosteriorParams(np.zeros(2), np.ones(2)))


def example1_spec():
    """Input fixed at 1, output constrained to y <= 1."""
    return RobustnessSpec(np.array([1.0]), 0.0, ((np.array([-1.0]), -1.0),))


def random_dense_net(rng, dims, sigma=0.05, bias=True, final_relu=False):
    """Random fully-connected ReLU net with a Gaussian posterior.

    ``dims`` is the full chain, e.g. (4, 8, 3).  Means are scaled by fan-in;
    stds are constant ``sigma``.
    """
    layers = []
    n_w = 0
    for i in range(len(dims) - 1):
        layers.append(LayerSpec.dense(dims[i], dims[i + 1], bayesian=True, bias=bias))
        n_w += dims[i] * dims[i + 1] + (dims[i + 1] if bias else 0)
        if i < len(dims) - 2 or final_relu:
            layers.append(LayerSpec.relu())
    mean = np.empty(n_w)
    off = 0
    for i in range(len(dims) - 1):
        k = dims[i] * dims[i + 1]
        mean[off:off + k] = rng.normal(0.0, 1.0 / np.sqrt(dims[i]), k)
        off += k
        if bias:
            mean[off:off + dims[i + 1]] = rng.normal(0.0, 0.1, dims[i + 1])
            off += dims[i + 1]
    std = np.full(n_w, sigma)
    return NetworkDef(tuple(layers), PosteriorParams(mean, std))


def straightline_dense_forward(dims, w, x, bias=True, final_relu=False):
    """Independent dense-chain evaluator.

    Slices the flat vector by the documented order (per layer: weights in
    row-major (out, in) shape, then biases) without touching the library's
    layer machinery, so it can serve as an oracle for it.
    """
    w = np.asarray(w, dtype=np.float64)
    h = np.asarray(x, dtype=np.float64)
    off = 0
    n_layers = len(dims) - 1
    for i in range(n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        mat = w[off:off + fan_out * fan_in].reshape(fan_out, fan_in)
        off += fan_out * fan_in
        b = 0.0
        if bias:
            b = w[off:off + fan_out]
            off += fan_out
        h = mat @ h + b
        if i < n_layers - 1 or final_relu:
            h = np.maximum(h, 0.0)
    return h


def reference_conv2d(x_img, kernel, bias, stride):
    """Independent conv evaluator: explicit loops over output positions.

    ``x_img`` is (in_ch, H, W); ``kernel`` is (out_ch, in_ch, k, k).
    """
    out_ch, in_ch, k, _ = kernel.shape
    H, W = x_img.shape[1:]
    oh = (H - k) // stride + 1
    ow = (W - k) // stride + 1
    out = np.zeros((out_ch, oh, ow))
    for oc in range(out_ch):
        for oy in range(oh):
            for ox in range(ow):
                acc = 0.0
                for ic in range(in_ch):
                    for ky in range(k):
                        for kx in range(k):
                            acc += kernel[oc, ic, ky, kx] * x_img[ic, oy * stride + ky, ox * stride + kx]
                out[oc, oy, ox] = acc + (bias[oc] if bias is not None else 0.0)
    return out


def batched_forward(net, w_batch, x_batch):
    """Batched evaluation helper for sampling-based soundness checks.

    Uses the network's index maps for speed; test_network pins it against
    the independent evaluators before other tests lean on it.
    """
    w_batch = np.atleast_2d(np.asarray(w_batch, dtype=np.float64))
    h = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    for layer, amap in net.walk():
        if layer.kind == "relu":
            h = np.maximum(h, 0.0)
            continue
        idx = amap.weight_idx
        mats = np.where(idx >= 0, w_batch[:, idx], 0.0)
        bidx = amap.bias_idx
        biases = np.where(bidx >= 0, w_batch[:, bidx], 0.0)
        h = np.einsum("boi,bi->bo", mats, h) + biases
    return h


def small_conv_net(rng, sigma=0.02):
    """conv(1->2, k2, s1, 4x4) -> relu -> dense(18 -> 3), bayesian throughout."""
    layers = (
        LayerSpec.conv2d(1, 2, 2, 1, 4, 4, bayesian=True),
        LayerSpec.relu(),
        LayerSpec.dense(18, 3, bayesian=True),
    )
    n_w = (2 * 1 * 2 * 2 + 2) + (3 * 18 + 3)
    mean = rng.normal(0.0, 0.3, n_w)
    return NetworkDef(layers, PosteriorParams(mean, np.full(n_w, sigma)))


@pytest.fixture
def example1():
    return make_example1(), example1_spec()
