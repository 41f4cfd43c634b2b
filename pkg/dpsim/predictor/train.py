"""
Training the PSF predictor on ray-traced PSFs
"""
from __future__ import annotations

import logging
import math
from typing import List, Tuple

import numpy as np

from dpsim.errors import NumericalError, VignettedPointError
from dpsim.predictor.mlp import Gradients, loss_and_gradients
from dpsim.predictor.predict import encode_points
from dpsim.predictor.types import MlpWeights, TrainConfig, TrainResult
from dpsim.psf import CameraRig, FrustumPoint, PsfGrid, normalize, trace_dp_psf
from dpsim.psf.engine import depths_from_inverse

logger = logging.getLogger(__name__)


def max_normalized_target(psf) -> np.ndarray:
    """
    A PSF as a training target: both kernels flattened, left first, divided by
    their joint maximum
    """
    return normalize(psf, "max").concatenated()


class GridTargets:
    """
    Training pairs drawn at random from a pre-traced grid
    """
    def __init__(self, grid: PsfGrid, rig: CameraRig):
        records = grid.traced
        if not records:
            raise ValueError("PSF grid holds no traced records to train on")
        if grid.ks != rig.ks:
            raise ValueError(f"grid has ks={grid.ks} but the rig uses ks={rig.ks}")

        points = np.array([r.point for r in records], dtype=float)
        self.inputs = encode_points(rig, points[:, 0], points[:, 1], points[:, 2]).astype(np.float32)
        self.targets = np.stack([max_normalized_target(r.psf) for r in records]).astype(np.float32)

    def __len__(self) -> int:
        return len(self.inputs)

    def sample(self, rng: np.random.Generator, batch: int) -> Tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(0, len(self.inputs), size=batch)
        return self.inputs[idx], self.targets[idx]


class TraceTargets:
    """
    Training pairs traced on demand at random frustum points.  Much slower
    than GridTargets, but never repeats a point
    """
    def __init__(self, rig: CameraRig):
        self.rig = rig

    def sample(self, rng: np.random.Generator, batch: int) -> Tuple[np.ndarray, np.ndarray]:
        points: List[Tuple[float, float, float]] = []
        targets = []
        while len(points) < batch:
            u, v = rng.uniform(-1, 1, size=2)
            depth = float(depths_from_inverse(self.rig, rng.uniform(0, 1, size=1))[0])
            try:
                psf = trace_dp_psf(self.rig, FrustumPoint(float(u), float(v), depth))
            except VignettedPointError:
                continue
            points.append((float(u), float(v), depth))
            targets.append(max_normalized_target(psf))

        points = np.array(points)
        x = encode_points(self.rig, points[:, 0], points[:, 1], points[:, 2])
        return x.astype(np.float32), np.stack(targets).astype(np.float32)


def cosine_lr(step: int, total: int, lr_max: float, lr_min: float) -> float:
    """
    Learning rate at a step (0-based) of a cosine decay from lr_max to lr_min
    """
    if total <= 1:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * step / (total - 1)))


class Adam:
    """
    Adaptive-moment gradient descent, updating a network in place
    """
    def __init__(self, weights: MlpWeights, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(weights.weights, weights.biases)]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(weights.weights, weights.biases)]
        self.t = 0

    def step(self, weights: MlpWeights, grads: Gradients, lr: float) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        params = [weights.weights, weights.biases]
        for k, layer_grads in enumerate(grads):
            for slot, g in enumerate(layer_grads):
                m = self.m[k][slot]
                v = self.v[k][slot]
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * (g * g)
                update = (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
                params[slot][k] -= update.astype(params[slot][k].dtype)


def train(weights: MlpWeights, cfg: TrainConfig) -> TrainResult:
    """
    Fits the network to the config's target source by minimizing the mean
    squared error over random batches.  The input weights are left untouched;
    the same weights, config and seed always give the same result
    """
    trained = weights.copy()
    rng = np.random.default_rng(cfg.seed)
    adam = Adam(trained)
    losses: List[float] = []

    logger.info("training %r for %d iterations (batch %d)", trained, cfg.iterations, cfg.batch)
    for step in range(cfg.iterations):
        x, y = cfg.source.sample(rng, cfg.batch)
        loss, grads = loss_and_gradients(trained, x, y)
        if not math.isfinite(loss):
            raise NumericalError(f"training diverged at iteration {step}")
        losses.append(loss)
        adam.step(trained, grads, cosine_lr(step, cfg.iterations, cfg.lr_max, cfg.lr_min))

        if cfg.log_every and (step + 1) % cfg.log_every == 0:
            window = losses[-cfg.log_every:]
            logger.info("iteration %d: loss %.4g", step + 1, sum(window) / len(window))

    return TrainResult(weights=trained, losses=losses)
