"""
Predictor weights files.

Layout (little-endian): magic b"DPMLP\\x01", u8 activation id, u32 ks,
u32 layer count, then per layer u32 in, u32 out, in * out f32 weights
(row-major, (in, out)) and out f32 biases.
"""
from __future__ import annotations

import numpy as np

from dpsim.errors import WeightsFormatError
from dpsim.predictor.types import Activation, MlpWeights

MAGIC = b"DPMLP\x01"

_HEADER = np.dtype([("activation", "u1"), ("ks", "<u4"), ("layers", "<u4")])
_LAYER = np.dtype([("fan_in", "<u4"), ("fan_out", "<u4")])


def save_weights(weights: MlpWeights) -> bytes:
    """
    Encodes a predictor network.  Weights are stored as float32
    """
    header = np.array([(int(weights.activation), weights.ks, len(weights.weights))], dtype=_HEADER)
    parts = [MAGIC, header.tobytes()]
    for w, b in zip(weights.weights, weights.biases):
        parts.append(np.array([w.shape], dtype=_LAYER).tobytes())
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, dtype, count: int = 1) -> np.ndarray:
        dtype = np.dtype(dtype)
        end = self.offset + dtype.itemsize * count
        if end > len(self.data):
            raise WeightsFormatError(f"weights file is truncated at byte {len(self.data)}")
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset)
        self.offset = end
        return out


def load_weights(data: bytes) -> MlpWeights:
    """
    Decodes a weights file into float32 arrays

    :raises WeightsFormatError: on a bad magic number, an unknown activation,
                                a truncated payload or inconsistent layer sizes
    """
    if data[: len(MAGIC)] != MAGIC:
        raise WeightsFormatError("not a predictor weights file (bad magic)")
    reader = _Reader(data)
    reader.offset = len(MAGIC)

    header = reader.take(_HEADER)[0]
    try:
        activation = Activation(int(header["activation"]))
    except ValueError:
        raise WeightsFormatError(f"unknown activation id {int(header['activation'])}")
    if int(header["layers"]) < 1:
        raise WeightsFormatError("weights file has no layers")

    weights, biases = [], []
    for _ in range(int(header["layers"])):
        shape = reader.take(_LAYER)[0]
        fan_in, fan_out = int(shape["fan_in"]), int(shape["fan_out"])
        weights.append(reader.take("<f4", fan_in * fan_out).reshape(fan_in, fan_out).astype(np.float32))
        biases.append(reader.take("<f4", fan_out).astype(np.float32))
    if reader.offset != len(data):
        raise WeightsFormatError(f"{len(data) - reader.offset} trailing bytes after the last layer")

    try:
        loaded = MlpWeights(weights=weights, biases=biases, activation=activation)
        ks = loaded.ks
    except ValueError as e:
        raise WeightsFormatError(str(e))
    if ks != int(header["ks"]):
        raise WeightsFormatError(f"header says ks={int(header['ks'])} but the output layer gives ks={ks}")
    return loaded
