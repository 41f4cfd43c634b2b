from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
import math
from typing import List, Optional, Protocol, Tuple

import numpy as np

#: Hidden layer widths of the PSF predictor
DEFAULT_HIDDEN = (512, 512, 512, 512, 512)


class Activation(IntEnum):
    """
    Hidden-layer activations; the value is the id stored in weights files
    """
    relu = 0

    def __repr__(self) -> str:
        return self.name


@dataclass(eq=False)
class MlpWeights:
    """
    A fully connected network.  weights[k] has shape (in, out) so a batch of
    row vectors x maps to x @ weights[k] + biases[k]; the last layer is linear
    """
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: Activation = Activation.relu
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("need one bias vector per weight matrix, and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: weight {w.shape} does not match bias {b.shape}")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ValueError(
                    f"layer {k} takes {w.shape[0]} inputs but layer {k - 1} gives {self.weights[k - 1].shape[1]}"
                )

    def __repr__(self) -> str:
        return f"MlpWeights({' -> '.join(str(d) for d in self.dims)}, {self.activation!r})"

    @property
    def dims(self) -> List[int]:
        """
        Layer widths, input first
        """
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    @property
    def ks(self) -> int:
        """
        Kernel size of the PSFs this network predicts

        :raises ValueError: if the output width is not 2 * ks**2 for an odd ks
        """
        half = self.dims[-1] // 2
        ks = math.isqrt(half)
        if 2 * ks * ks != self.dims[-1] or ks % 2 != 1:
            raise ValueError(f"output width {self.dims[-1]} is not 2*ks^2 for an odd ks")
        return ks

    def astype(self, dtype) -> MlpWeights:
        return MlpWeights(
            weights=[w.astype(dtype) for w in self.weights],
            biases=[b.astype(dtype) for b in self.biases],
            activation=self.activation,
            seed=self.seed,
        )

    def copy(self) -> MlpWeights:
        return self.astype(self.dtype)


class TargetSource(Protocol):
    """
    Something that hands out training pairs: (N, 3) encoded points and
    (N, 2 * ks**2) max-normalized targets
    """
    def sample(self, rng: np.random.Generator, batch: int) -> Tuple[np.ndarray, np.ndarray]:
        ...


@dataclass
class TrainConfig:
    """
    How to train the predictor.  The learning rate follows a cosine from
    lr_max down to lr_min over the run
    """
    source: TargetSource
    iterations: int = 100_000
    batch: int = 128
    lr_max: float = 1e-4
    lr_min: float = 1e-6
    seed: int = 0
    log_every: int = 1000

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError(f"need 0 < lr_min <= lr_max, got {self.lr_min}, {self.lr_max}")


@dataclass
class TrainResult:
    weights: MlpWeights
    losses: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class PredictorReport:
    """
    Predictor accuracy over held-out traced PSFs: mean per-element L1 and L2
    errors on sum-normalized pairs, mean NCC, and prediction time per PSF
    """
    count: int
    l1: float
    l2: float
    ncc: float
    seconds_per_psf: float

    def to_dict(self):
        return {
            "count": self.count,
            "l1": self.l1,
            "l2": self.l2,
            "ncc": self.ncc,
            "seconds_per_psf": self.seconds_per_psf,
        }
