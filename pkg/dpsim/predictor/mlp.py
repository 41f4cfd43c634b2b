"""
The PSF predictor network in plain numpy: initialization, the forward pass,
and backpropagation of the mean squared error
"""
from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from dpsim.predictor.types import DEFAULT_HIDDEN, Activation, MlpWeights

Gradients = List[Tuple[np.ndarray, np.ndarray]]


def init_layers(dims: Sequence[int], seed: int, dtype=np.float32) -> MlpWeights:
    """
    Builds a network with the given layer widths.  Weights are uniform in
    +-sqrt(6 / fan_in), biases zero; the result depends only on the seed
    """
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"need at least an input and an output width, got {list(dims)}")

    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpWeights(weights=weights, biases=biases, activation=Activation.relu, seed=seed)


def init_mlp(ks: int, seed: int, hidden: Sequence[int] = DEFAULT_HIDDEN, dtype=np.float32) -> MlpWeights:
    """
    A fresh PSF predictor: 3 inputs (u, v, normalized inverse depth), the
    hidden layers, and 2 * ks**2 outputs (left kernel then right)
    """
    if ks < 1 or ks % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {ks}")
    return init_layers([3, *hidden, 2 * ks * ks], seed, dtype=dtype)


def _as_batch(weights: MlpWeights, x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=weights.dtype)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != weights.dims[0]:
        raise ValueError(f"network takes {weights.dims[0]} inputs, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("network input is not finite")
    return x, single


def _forward_cached(weights: MlpWeights, x: np.ndarray) -> List[np.ndarray]:
    """
    Runs the network and keeps every layer's pre-activation
    """
    pre = []
    a = x
    last = len(weights.weights) - 1
    for k, (w, b) in enumerate(zip(weights.weights, weights.biases)):
        z = a @ w + b
        pre.append(z)
        a = z if k == last else np.maximum(z, 0)
    return pre


def forward(weights: MlpWeights, x) -> np.ndarray:
    """
    Raw network output for one encoded point (shape (3,)) or a batch (N, 3)
    """
    x, single = _as_batch(weights, x)
    out = _forward_cached(weights, x)[-1]
    return out[0] if single else out


def loss_and_gradients(
    weights: MlpWeights, inputs: np.ndarray, targets: np.ndarray,
) -> Tuple[float, Gradients]:
    """
    Mean squared error of the network over a batch, and its gradient with
    respect to every (weight, bias) pair
    """
    x, _ = _as_batch(weights, inputs)
    targets = np.asarray(targets, dtype=weights.dtype)
    pre = _forward_cached(weights, x)
    if targets.shape != pre[-1].shape:
        raise ValueError(f"targets have shape {targets.shape}, the network gives {pre[-1].shape}")

    diff = pre[-1] - targets
    loss = float(np.mean(diff * diff, dtype=np.float64))

    grads: Gradients = [None] * len(weights.weights)
    delta = (2.0 / diff.size) * diff
    for k in range(len(weights.weights) - 1, -1, -1):
        a_in = x if k == 0 else np.maximum(pre[k - 1], 0)
        grads[k] = (a_in.T @ delta, delta.sum(axis=0))
        if k:
            delta = (delta @ weights.weights[k].T) * (pre[k - 1] > 0)
    return loss, grads
