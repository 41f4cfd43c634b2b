"""
Inference with a trained PSF predictor
"""
from __future__ import annotations

import logging
import time
from typing import Optional

import numpy as np

from dpsim.errors import DegeneratePredictionError, WeightsFormatError
from dpsim.predictor.mlp import forward
from dpsim.predictor.types import MlpWeights, PredictorReport
from dpsim.psf import (
    CameraRig,
    DpPsf,
    FrustumPoint,
    PsfGrid,
    PsfNormalization,
    frustum_to_world,
    ncc,
    normalize,
    pinhole_anchor,
)

logger = logging.getLogger(__name__)

#: Points per forward pass when predicting large batches
PREDICT_CHUNK = 4096


def encode_points(rig: CameraRig, u, v, depth) -> np.ndarray:
    """
    Network inputs for frustum points: (u, v, z) with z the inverse depth
    scaled to 0 at d_max and 1 at d_min
    """
    u, v, depth = np.broadcast_arrays(
        np.asarray(u, dtype=float), np.asarray(v, dtype=float), np.asarray(depth, dtype=float),
    )
    z = (1 / depth - 1 / rig.d_max) / (1 / rig.d_min - 1 / rig.d_max)
    return np.stack([u.ravel(), v.ravel(), z.ravel()], axis=-1)


def encode_point(rig: CameraRig, u: float, v: float, depth: float) -> np.ndarray:
    return encode_points(rig, u, v, depth)[0]


def _to_kernels(raw: np.ndarray, ks: int) -> np.ndarray:
    """
    Clamps raw network output at zero and sum-normalizes each left/right
    pair, giving (N, 2, ks, ks)
    """
    clamped = np.maximum(raw, 0).astype(np.float64)
    totals = clamped.sum(axis=-1, keepdims=True)
    if np.any(totals <= 0):
        raise DegeneratePredictionError(
            f"degenerate prediction: {int(np.count_nonzero(totals <= 0))} PSFs clamp to all zeros"
        )
    return (clamped / totals).reshape(-1, 2, ks, ks)


class PsfPredictor:
    """
    A trained network bound to the rig it was trained for
    """
    def __init__(self, weights: MlpWeights, rig: CameraRig):
        try:
            ks = weights.ks
        except ValueError as e:
            raise WeightsFormatError(str(e))
        if weights.dims[0] != 3:
            raise WeightsFormatError(f"predictor takes 3 inputs, these weights take {weights.dims[0]}")
        if ks != rig.ks:
            raise WeightsFormatError(f"weights predict ks={ks} PSFs but the rig uses ks={rig.ks}")
        self.weights = weights
        self.rig = rig

    def __repr__(self) -> str:
        return f"PsfPredictor({self.weights!r})"

    @property
    def ks(self) -> int:
        return self.rig.ks

    def kernels(self, u, v, depth) -> np.ndarray:
        """
        Sum-normalized kernel pairs, (N, 2, ks, ks), for arrays of frustum
        points
        """
        x = encode_points(self.rig, u, v, depth)
        out = np.empty((len(x), 2, self.ks, self.ks))
        for start in range(0, len(x), PREDICT_CHUNK):
            chunk = x[start:start + PREDICT_CHUNK]
            out[start:start + len(chunk)] = _to_kernels(forward(self.weights, chunk), self.ks)
        return out

    predict_kernels = kernels

    def predict(self, u: float, v: float, depth: float) -> DpPsf:
        """
        The sum-normalized DP PSF at one frustum point, anchored at its pinhole
        image
        """
        frustum_to_world(self.rig, u, v, depth)
        kernels = self.kernels(u, v, depth)[0]
        return DpPsf(
            left=kernels[0],
            right=kernels[1],
            anchor=pinhole_anchor(self.rig, u, v),
            normalization=PsfNormalization.sum_normalized,
        )


def predict(weights: MlpWeights, rig: CameraRig, point: FrustumPoint) -> DpPsf:
    """
    Predicts the sum-normalized DP PSF of a frustum point
    """
    return PsfPredictor(weights, rig).predict(*point)


def evaluate_predictor(
    predictor: PsfPredictor, grid: PsfGrid, limit: Optional[int] = None,
) -> PredictorReport:
    """
    Compares predictions with ray-traced PSFs over a grid: mean per-element L1
    and L2 between sum-normalized pairs (the form the renderer consumes), mean
    NCC, and time per prediction
    """
    records = grid.traced[:limit] if limit else grid.traced
    if not records:
        raise ValueError("no traced PSFs to evaluate against")

    points = np.array([r.point for r in records], dtype=float)
    started = time.perf_counter()
    kernels = predictor.kernels(points[:, 0], points[:, 1], points[:, 2])
    elapsed = time.perf_counter() - started

    l1, l2, nccs = [], [], []
    for record, pair in zip(records, kernels):
        target = normalize(record.psf, "sum")
        predicted = DpPsf(
            left=pair[0], right=pair[1], anchor=record.psf.anchor,
            normalization=PsfNormalization.sum_normalized,
        )
        nccs.append(ncc(predicted, target))
        diff = predicted.concatenated() - target.concatenated()
        l1.append(np.mean(np.abs(diff)))
        l2.append(np.mean(diff * diff))

    report = PredictorReport(
        count=len(records),
        l1=float(np.mean(l1)),
        l2=float(np.mean(l2)),
        ncc=float(np.mean(nccs)),
        seconds_per_psf=elapsed / len(records),
    )
    logger.info("predictor over %d PSFs: L1 %.3g, L2 %.3g, NCC %.4f", report.count, report.l1, report.l2, report.ncc)
    return report
