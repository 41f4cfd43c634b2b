"""
Deciding which DP pixel and which sub-pixel a landed ray ends up in, and
counting rays into PSF kernels.

The sub-pixel tests only look at x: both sub-pixels span the full pixel
height.  A ray landing inside the microlens circle is bent by it and tested
against the refracted boundary lines; any other ray travels straight down to
the sub-pixels.  Ties at the middle boundary go right.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from dpsim.sensor.types import (
    DpPixelGeometry,
    DpPsf,
    PixelIndex,
    PsfNormalization,
    SensorGeometry,
    SubPixel,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class PixelHit(NamedTuple):
    """
    The pixel a point falls in and that pixel's center (mm)
    """
    index: PixelIndex
    center: Tuple[float, float]


def locate_pixels(sensor: SensorGeometry, points: np.ndarray):
    """
    Bins (N, 2) sensor points (mm) into pixels.

    :returns: column and row index arrays, a mask of points on the sensor, and
              the (N, 2) pixel centers.  Indices of off-sensor points are
              meaningless
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    ps = sensor.ps
    with np.errstate(invalid="ignore"):
        fi = np.floor(points[:, 0] / ps + sensor.cols / 2)
        fj = np.floor(points[:, 1] / ps + sensor.rows / 2)
    inside = (fi >= 0) & (fi < sensor.cols) & (fj >= 0) & (fj < sensor.rows)

    i = np.where(inside, fi, -1).astype(np.int64)
    j = np.where(inside, fj, -1).astype(np.int64)
    # centers as (index - (n-1)/2) * ps so mirrored pixels get exactly negated centers
    centers = np.stack([
        (i - (sensor.cols - 1) / 2) * ps,
        (j - (sensor.rows - 1) / 2) * ps,
    ], axis=-1)
    return i, j, inside, centers


def pixel_of(sensor: SensorGeometry, point) -> Optional[PixelHit]:
    """
    Returns the pixel containing a sensor point (mm) and the pixel's center, or
    None if the point is off the sensor
    """
    i, j, inside, centers = locate_pixels(sensor, np.asarray(point, dtype=float)[None, :])
    if not inside[0]:
        return None
    return PixelHit(PixelIndex(int(i[0]), int(j[0])), (float(centers[0, 0]), float(centers[0, 1])))


def _classify(x_k, x_left, x_mid, x_right) -> np.ndarray:
    """
    Applies the interval rule: left on (x_mid, x_left], right on
    [x_right, x_mid], missed elsewhere
    """
    left = (x_mid < x_k) & (x_k <= x_left)
    right = (x_right <= x_k) & (x_k <= x_mid)
    return np.where(left, SubPixel.left, np.where(right, SubPixel.right, SubPixel.missed)).astype(np.int8)


def _scalar_or_array(codes: np.ndarray, *inputs) -> Union[SubPixel, np.ndarray]:
    if all(np.ndim(a) == 0 for a in inputs):
        return SubPixel(int(codes))
    return codes


def refracted_boundaries(geom: DpPixelGeometry, x_i: ArrayLike, tan_theta: ArrayLike):
    """
    Left, middle and right boundary lines for a ray bent by the microlens.
    Written so that mirroring (x_i, tan) negates the boundaries exactly
    """
    if not geom.f > geom.h:
        raise ValueError(f"microlens needs f > h, got f={geom.f}, h={geom.h}")

    k = geom.h / (geom.f - geom.h)
    ft = geom.f * np.asarray(tan_theta, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    x_left = (x_i + geom.w) - (ft - geom.w) * k
    x_mid = x_i - ft * k
    x_right = (x_i - geom.w) - (ft + geom.w) * k
    return x_left, x_mid, x_right


def direct_boundaries(geom: DpPixelGeometry, x_i: ArrayLike, tan_theta: ArrayLike):
    """
    Left, middle and right boundary lines for a ray that misses the microlens
    """
    shift = geom.h * np.asarray(tan_theta, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    return (x_i + geom.w) - shift, x_i - shift, (x_i - geom.w) - shift


def assign_refracted(
    geom: DpPixelGeometry, x_i: ArrayLike, x_k: ArrayLike, tan_theta: ArrayLike,
) -> Union[SubPixel, np.ndarray]:
    """
    Sub-pixel for a ray landing at x_k inside the microlens of the pixel
    centered at x_i, arriving with slope tan_theta.  Scalars in, SubPixel out;
    arrays in, an array of SubPixel codes out
    """
    x_left, x_mid, x_right = refracted_boundaries(geom, x_i, tan_theta)
    codes = _classify(np.asarray(x_k, dtype=float), x_left, x_mid, x_right)
    return _scalar_or_array(codes, x_i, x_k, tan_theta)


def assign_direct(
    geom: DpPixelGeometry, x_i: ArrayLike, x_k: ArrayLike, tan_theta: ArrayLike,
) -> Union[SubPixel, np.ndarray]:
    """
    Sub-pixel for a ray landing at x_k outside the microlens of the pixel
    centered at x_i; same conventions as assign_refracted
    """
    x_left, x_mid, x_right = direct_boundaries(geom, x_i, tan_theta)
    codes = _classify(np.asarray(x_k, dtype=float), x_left, x_mid, x_right)
    return _scalar_or_array(codes, x_i, x_k, tan_theta)


@dataclass
class SubPixelHits:
    """
    Per-ray pixel indices and sub-pixel codes for a bundle.  Rays off the
    sensor have index -1 and code missed
    """
    i: np.ndarray
    j: np.ndarray
    side: np.ndarray

    def __len__(self) -> int:
        return len(self.side)

    def __getitem__(self, k: int) -> Tuple[Optional[PixelIndex], SubPixel]:
        if self.i[k] < 0:
            return None, SubPixel.missed
        return PixelIndex(int(self.i[k]), int(self.j[k])), SubPixel(int(self.side[k]))


def assign_subpixels(
    geom: DpPixelGeometry, sensor: SensorGeometry, landing: np.ndarray, direction: np.ndarray,
) -> SubPixelHits:
    """
    Finds the pixel and sub-pixel of each of N landed rays, given (N, 2)
    landing points and (N, 3) unit directions
    """
    landing = np.asarray(landing, dtype=float).reshape(-1, 2)
    direction = np.asarray(direction, dtype=float).reshape(-1, 3)

    i, j, inside, centers = locate_pixels(sensor, landing)
    dx = landing[:, 0] - centers[:, 0]
    dy = landing[:, 1] - centers[:, 1]
    in_microlens = dx * dx + dy * dy <= geom.r * geom.r
    tan_theta = direction[:, 0] / direction[:, 2]

    x_i, x_k = centers[:, 0], landing[:, 0]
    codes = np.where(
        in_microlens,
        assign_refracted(geom, x_i, x_k, tan_theta),
        assign_direct(geom, x_i, x_k, tan_theta),
    )
    codes = np.where(inside, codes, SubPixel.missed).astype(np.int8)
    return SubPixelHits(i=i, j=j, side=codes)


def assign_subpixel(
    geom: DpPixelGeometry, sensor: SensorGeometry, landing, direction,
) -> Tuple[Optional[PixelIndex], SubPixel]:
    """
    Pixel and sub-pixel for one landed ray; (None, missed) if it landed off the
    sensor
    """
    hits = assign_subpixels(
        geom, sensor,
        np.asarray(landing, dtype=float)[None, :],
        np.asarray(direction, dtype=float)[None, :],
    )
    return hits[0]


def accumulate_psf(
    hits: SubPixelHits, anchor: PixelIndex, ks: int, n_rays: Optional[int] = None,
) -> DpPsf:
    """
    Counts rays into ks x ks left/right kernels centered on the anchor pixel.
    Every ray adds exactly one to one cell, or to missed_count if it was missed
    or fell outside the window.

    :param n_rays: how many rays were emitted, if more than len(hits) (rays
                   lost inside the lens count as missed)
    """
    if ks < 1 or ks % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {ks}")
    if n_rays is None:
        n_rays = len(hits)
    if n_rays < len(hits):
        raise ValueError(f"{len(hits)} hits cannot come from {n_rays} rays")

    half = ks // 2
    ci = hits.i - anchor.i + half
    cj = hits.j - anchor.j + half
    assigned = (hits.side != SubPixel.missed) & (hits.i >= 0)
    in_window = assigned & (ci >= 0) & (ci < ks) & (cj >= 0) & (cj < ks)

    cells = cj * ks + ci
    left = np.bincount(
        cells[in_window & (hits.side == SubPixel.left)], minlength=ks * ks,
    ).reshape(ks, ks).astype(np.int64)
    right = np.bincount(
        cells[in_window & (hits.side == SubPixel.right)], minlength=ks * ks,
    ).reshape(ks, ks).astype(np.int64)

    window_misses = int(np.count_nonzero(assigned & ~in_window))
    missed = n_rays - int(left.sum()) - int(right.sum())
    return DpPsf(
        left=left,
        right=right,
        anchor=anchor,
        missed_count=missed,
        normalization=PsfNormalization.raw_counts,
        window_misses=window_misses,
        n_rays=n_rays,
    )
