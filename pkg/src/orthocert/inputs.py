"""Input and label file loading: plain CSV vectors or IDX image/label files."""

from __future__ import annotations

import struct
import warnings
from typing import Optional, Sequence

import numpy as np

__all__ = ["load_inputs", "load_labels"]

_IDX_IMAGES = 0x00000803
_IDX_LABELS = 0x00000801


def _read_idx(path) -> tuple[int, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise ValueError(f"{path}: too short for an IDX file")
    magic = struct.unpack(">I", data[:4])[0]
    if magic == _IDX_LABELS:
        (count,) = struct.unpack(">I", data[4:8])
        body = np.frombuffer(data, dtype=np.uint8, offset=8)
        if body.size < count:
            raise ValueError(f"{path}: truncated IDX label file")
        return magic, body[:count].astype(np.int64)
    if magic == _IDX_IMAGES:
        count, rows, cols = struct.unpack(">III", data[4:16])
        body = np.frombuffer(data, dtype=np.uint8, offset=16)
        if body.size < count * rows * cols:
            raise ValueError(f"{path}: truncated IDX image file")
        images = body[:count * rows * cols].reshape(count, rows * cols)
        return magic, images.astype(np.float64) / 255.0
    raise ValueError(f"{path}: unrecognized IDX magic 0x{magic:08x}")


def _looks_like_idx(path) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return len(head) == 4 and head[:2] == b"\x00\x00"


def load_inputs(path, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Load an (n_inputs, dim) matrix from a CSV file or an IDX image file.

    IDX pixel values are scaled to [0, 1]; CSV rows are taken verbatim.
    """
    if _looks_like_idx(path):
        magic, data = _read_idx(path)
        if magic != _IDX_IMAGES:
            raise ValueError(f"{path}: IDX file holds labels, not images")
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # empty files raise below instead
            data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if indices is not None:
        data = data[np.asarray(indices, dtype=np.int64)]
    if data.size == 0:
        raise ValueError(f"{path}: no inputs selected")
    return data


def load_labels(path, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Load integer labels from a CSV file or an IDX label file."""
    if _looks_like_idx(path):
        magic, data = _read_idx(path)
        if magic != _IDX_LABELS:
            raise ValueError(f"{path}: IDX file holds images, not labels")
    else:
        data = np.loadtxt(path, delimiter=",", ndmin=1, dtype=np.int64)
        data = data.reshape(-1)
    if indices is not None:
        data = data[np.asarray(indices, dtype=np.int64)]
    return data
