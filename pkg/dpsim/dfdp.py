"""
The bidirectional DP cost volume, and raw feature blobs for moving feature
maps between tools.

DP disparity changes sign across the focus plane, so the volume covers
negative as well as positive displacements.  Feature blobs are little-endian:
magic b"DPFEAT\\x01", u32 B, C, H, W, then B*C*H*W float32 values.
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from dpsim.errors import FeatureFormatError, ShapeMismatchError
from dpsim.util import parallel_map

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"DPFEAT\x01"

_DIMS = np.dtype("<u4")


def displacements(d_max: int) -> np.ndarray:
    """
    The displacement held by each slice of a d_max-slice volume; odd d_max
    centers 0, even d_max has one more negative displacement than positive
    """
    return np.arange(d_max) - d_max // 2


def _fill_slice(volume: np.ndarray, x: np.ndarray, y: np.ndarray, b: int, i: int, d: int) -> None:
    c = x.shape[1]
    width = x.shape[3]
    if abs(d) >= width:
        # nothing overlaps; the slice stays zero
        return
    if d < 0:
        volume[b, :c, i, :, :width + d] = x[b, :, :, :width + d]
        volume[b, c:, i, :, :width + d] = y[b, :, :, -d:]
    elif d == 0:
        volume[b, :c, i] = x[b]
        volume[b, c:, i] = y[b]
    else:
        volume[b, :c, i, :, d:] = x[b, :, :, d:]
        volume[b, c:, i, :, d:] = y[b, :, :, :width - d]


def dp_cost_volume(x: np.ndarray, y: np.ndarray, d_max: int) -> np.ndarray:
    """
    Stacks left features x and right features y, both (B, C, H, W), over
    d_max displacements into a (B, 2C, d_max, H, W) volume.  Columns a shift
    leaves uncovered stay zero
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.ndim != 4:
        raise ValueError(f"features must be (B, C, H, W), got {x.shape}")
    if x.shape != y.shape:
        raise ShapeMismatchError("feature map", x.shape, y.shape)
    if d_max < 1:
        raise ValueError(f"d_max must be >= 1, got {d_max}")
    if min(x.shape) < 1:
        raise ValueError(f"feature map dimensions must be >= 1, got {x.shape}")

    batch, channels, height, width = x.shape
    volume = np.zeros((batch, 2 * channels, d_max, height, width), dtype=np.result_type(x, y))
    slices = [(b, i, int(d)) for b in range(batch) for i, d in enumerate(displacements(d_max))]
    # every (b, i) writes a disjoint part of the volume
    parallel_map(lambda s: _fill_slice(volume, x, y, *s), slices)
    return volume


def write_feature_blob(features: np.ndarray) -> bytes:
    """
    Encodes a 4D array as a feature blob.  Higher-rank arrays (a cost volume)
    are folded into the trailing axes: (B, C, D, H, W) becomes (B, C*D, H, W)
    """
    features = np.asarray(features)
    if features.ndim < 4:
        raise ValueError(f"feature blobs hold (B, C, H, W) arrays, got {features.shape}")
    b, h, w = features.shape[0], features.shape[-2], features.shape[-1]
    c = int(np.prod(features.shape[1:-2]))
    dims = np.array([b, c, h, w], dtype=_DIMS)
    return FEATURE_MAGIC + dims.tobytes() + np.ascontiguousarray(features, dtype="<f4").tobytes()


def read_feature_blob(data: bytes) -> np.ndarray:
    """
    Decodes a feature blob into a (B, C, H, W) float32 array

    :raises FeatureFormatError: on a bad magic number or a payload that does
                                not match the header
    """
    if data[: len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise FeatureFormatError("not a feature blob (bad magic)")
    offset = len(FEATURE_MAGIC)
    if len(data) < offset + 4 * _DIMS.itemsize:
        raise FeatureFormatError("truncated feature blob header")

    dims: Sequence[int] = [int(n) for n in np.frombuffer(data, dtype=_DIMS, count=4, offset=offset)]
    if min(dims) < 1:
        raise FeatureFormatError(f"feature blob dimensions must be >= 1, got {dims}")
    offset += 4 * _DIMS.itemsize
    expected = int(np.prod(dims)) * 4
    if len(data) - offset != expected:
        raise FeatureFormatError(f"feature blob payload is {len(data) - offset} bytes, expected {expected}")

    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims).astype(np.float32)
