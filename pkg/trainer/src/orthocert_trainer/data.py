"""Datasets: a separable 2-D toy problem and MNIST from local IDX files."""

from __future__ import annotations

import os
import struct

import numpy as np

__all__ = ["make_toy2d", "load_mnist", "DatasetMissingError"]


class DatasetMissingError(FileNotFoundError):
    pass


def make_toy2d(n: int = 400, seed: int = 0, gap: float = 0.15):
    """Linearly separable two-class points in the unit square.

    Class is the side of the diagonal x + y = 1; points inside the margin
    band are resampled so a small net can reach high accuracy.
    """
    rng = np.random.default_rng(seed)
    xs = np.empty((n, 2))
    ys = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        cand = rng.uniform(0.0, 1.0, (n, 2))
        margin = cand.sum(axis=1) - 1.0
        keep = np.abs(margin) > gap / 2
        take = min(n - filled, int(keep.sum()))
        xs[filled:filled + take] = cand[keep][:take]
        ys[filled:filled + take] = (margin[keep][:take] > 0).astype(np.int64)
        filled += take
    return xs, ys


def _read_idx(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic = struct.unpack(">I", data[:4])[0]
    if magic == 0x00000803:
        count, rows, cols = struct.unpack(">III", data[4:16])
        body = np.frombuffer(data, dtype=np.uint8, offset=16)
        return body.reshape(count, rows * cols).astype(np.float64) / 255.0
    if magic == 0x00000801:
        (count,) = struct.unpack(">I", data[4:8])
        return np.frombuffer(data, dtype=np.uint8, offset=8)[:count].astype(np.int64)
    raise ValueError(f"{path}: unrecognized IDX magic 0x{magic:08x}")


def load_mnist(data_dir: str, split: str = "train"):
    """MNIST from IDX files in ``data_dir``; raises with download guidance."""
    prefix = "train" if split == "train" else "t10k"
    img = os.path.join(data_dir, f"{prefix}-images-idx3-ubyte")
    lab = os.path.join(data_dir, f"{prefix}-labels-idx1-ubyte")
    for path in (img, lab):
        if not os.path.exists(path):
            raise DatasetMissingError(
                f"missing {path}; place the uncompressed MNIST IDX files "
                "(train-images-idx3-ubyte, train-labels-idx1-ubyte, ...) in "
                f"{data_dir}, e.g. from https://ossci-datasets.s3.amazonaws.com/mnist/")
    return _read_idx(img), _read_idx(lab)
