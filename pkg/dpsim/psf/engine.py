"""
Ray-traced DP PSFs: from an object point in the frustum, through the lens,
onto the DP pixels
"""
from __future__ import annotations

from dataclasses import replace
import logging
import math
from typing import List, Sequence, Union

import numpy as np

from dpsim.errors import VignettedPointError
from dpsim.optics import MissReason, sample_pupil, trace_bundle
from dpsim.psf.types import (
    AnyPoint,
    CameraRig,
    FrustumPoint,
    GridRecord,
    GridSpec,
    LandedBundle,
    ObjectPoint,
    PsfGrid,
)
from dpsim.sensor import (
    DpPixelGeometry,
    DpPsf,
    PixelIndex,
    PsfNormalization,
    SensorGeometry,
    accumulate_psf,
    assign_subpixels,
)
from dpsim.util import parallel_map

logger = logging.getLogger(__name__)


def _check_frustum(rig: CameraRig, u: float, v: float, depth: float) -> None:
    if not (np.isfinite(u) and np.isfinite(v) and np.isfinite(depth)):
        raise ValueError(f"point ({u}, {v}, {depth}) is not finite")
    if abs(u) > 1 or abs(v) > 1:
        raise ValueError(f"normalized coordinates must lie in [-1, 1], got ({u}, {v})")
    if not rig.d_min <= depth <= rig.d_max:
        raise ValueError(
            f"depth {depth} m is outside the valid range {rig.d_min}-{rig.d_max} m"
        )


def _field_extent(rig: CameraRig, depth: float):
    """
    Half-width and half-height (mm) of the frustum cross-section at a depth
    """
    scale = depth * 1000.0 / rig.efl
    return rig.sensor.width / 2 * scale, rig.sensor.height / 2 * scale


def frustum_to_world(rig: CameraRig, u: float, v: float, depth: float) -> ObjectPoint:
    """
    Maps normalized frustum coordinates to a world point with a pinhole field
    mapping: u = 1 is the object seen by the sensor edge through an ideal lens
    of the rig's focal length
    """
    _check_frustum(rig, u, v, depth)
    x_max, y_max = _field_extent(rig, depth)
    return ObjectPoint(u * x_max, v * y_max, depth)


def world_to_frustum(rig: CameraRig, point: ObjectPoint) -> FrustumPoint:
    """
    Inverse of frustum_to_world
    """
    x_max, y_max = _field_extent(rig, point.depth)
    u, v = point.x / x_max, point.y / y_max
    _check_frustum(rig, u, v, point.depth)
    return FrustumPoint(u, v, point.depth)


def _as_world(rig: CameraRig, point: AnyPoint) -> ObjectPoint:
    if isinstance(point, FrustumPoint):
        return frustum_to_world(rig, *point)
    # validates the world point against the frustum
    world_to_frustum(rig, point)
    return point


def pixel_clamped(sensor: SensorGeometry, xy) -> PixelIndex:
    """
    The pixel containing a sensor-plane point, clamped onto the sensor for
    points just past its edge
    """
    x, y = xy
    i = math.floor(x / sensor.ps + sensor.cols / 2)
    j = math.floor(y / sensor.ps + sensor.rows / 2)
    return PixelIndex(min(max(i, 0), sensor.cols - 1), min(max(j, 0), sensor.rows - 1))


def pinhole_anchor(rig: CameraRig, u: float, v: float) -> PixelIndex:
    """
    The pixel an ideal pinhole camera images the frustum point (u, v) onto.
    Images are inverted, so u = 1 lands on the -x edge
    """
    return pixel_clamped(rig.sensor, (-u * rig.sensor.width / 2, -v * rig.sensor.height / 2))


def trace_landings(rig: CameraRig, point: AnyPoint) -> LandedBundle:
    """
    Traces the rig's ray fan from a point to the sensor plane and keeps the
    rays that got through the lens.  The sensor plane is unbounded here: the
    PSF window has its own pixel lattice around the chief landing, so a fan
    landing just past the sensor edge still gives a full PSF.  Independent of
    the DP pixel structure.

    :raises VignettedPointError: if no ray gets through the lens
    """
    world = _as_world(rig, point)
    origin = np.array([world.x, world.y, -world.depth * 1000.0])

    pupil = rig.pupil
    aims = sample_pupil(pupil, rig.n_rays)
    targets = np.concatenate(
        [np.zeros((1, 2)), aims], axis=0,
    )
    targets = np.concatenate([targets, np.full((len(targets), 1), pupil.position)], axis=1)
    directions = targets - origin
    directions /= np.sqrt(np.sum(directions * directions, axis=-1))[:, None]
    origins = np.broadcast_to(origin, directions.shape)

    # ray 0 is the chief ray; it only anchors the window and is not counted
    bundle = trace_bundle(rig.lens, origins, directions)
    keep = (bundle.miss_reason == MissReason.none) & np.isfinite(bundle.landing).all(axis=1)
    fan = keep[1:]

    if not fan.any():
        raise VignettedPointError(point)

    landing = bundle.landing[1:][fan]
    direction = bundle.direction[1:][fan]
    chief_clipped = not keep[0]
    if chief_clipped:
        center = (float(landing[:, 0].mean()), float(landing[:, 1].mean()))
        logger.debug("chief ray clipped for %s; window centered on the landed centroid", point)
    else:
        center = (float(bundle.landing[0, 0]), float(bundle.landing[0, 1]))

    return LandedBundle(
        landing=landing,
        direction=direction,
        n_rays=rig.n_rays,
        center=center,
        anchor=pixel_clamped(rig.sensor, center),
        chief_clipped=chief_clipped,
    )


def bin_dp_psf(dp: DpPixelGeometry, bundle: LandedBundle, ks: int) -> DpPsf:
    """
    Sorts landed rays into DP sub-pixels and counts them into a ks x ks window.

    The window's pixel lattice is centered on bundle.center, so the central
    window pixel is centered exactly on the chief-ray landing.  The binning
    lattice extends past the window far enough to hold every ray; rays it
    assigns outside the window show up in window_misses.
    """
    rel = bundle.landing - np.asarray(bundle.center)[None, :]
    reach = float(np.abs(rel).max()) if len(rel) else 0.0
    n = max(ks, 2 * int(math.ceil(reach / dp.ps)) + 3)
    if n % 2 == 0:
        n += 1

    lattice = SensorGeometry.window(dp.ps, n)
    hits = assign_subpixels(dp, lattice, rel, bundle.direction)
    psf = accumulate_psf(hits, PixelIndex(n // 2, n // 2), ks, n_rays=bundle.n_rays)
    return replace(psf, anchor=bundle.anchor)


def trace_dp_psf(rig: CameraRig, point: AnyPoint) -> DpPsf:
    """
    Returns the raw-count DP PSF of an object point.  left + right +
    missed_count always equals rig.n_rays

    :raises VignettedPointError: if no ray reaches the sensor
    """
    return bin_dp_psf(rig.dp, trace_landings(rig, point), rig.ks)


_MODES = {"max": PsfNormalization.max_normalized, "sum": PsfNormalization.sum_normalized}


def normalize(psf: DpPsf, mode: Union[str, PsfNormalization]) -> DpPsf:
    """
    Scales both kernels by one number: their joint maximum ("max") or their
    joint sum ("sum").  The left/right energy ratio is unchanged
    """
    if isinstance(mode, str):
        mode = _MODES[mode] if mode in _MODES else PsfNormalization(mode)
    if mode == PsfNormalization.raw_counts:
        raise ValueError("cannot normalize to raw counts")

    left = np.asarray(psf.left, dtype=float)
    right = np.asarray(psf.right, dtype=float)
    if mode == PsfNormalization.max_normalized:
        scale = max(left.max(), right.max())
    else:
        scale = left.sum() + right.sum()
    if not scale > 0:
        raise ValueError("cannot normalize an all-zero PSF")

    return psf.with_kernels(left / scale, right / scale, mode)


def depths_from_inverse(rig: CameraRig, t: np.ndarray) -> np.ndarray:
    """
    Depths (m) at fractions t of the way from 1/d_max to 1/d_min
    """
    inv = 1 / rig.d_max + t * (1 / rig.d_min - 1 / rig.d_max)
    return np.clip(1 / inv, rig.d_min, rig.d_max)


def grid_points(rig: CameraRig, spec: GridSpec) -> List[FrustumPoint]:
    """
    Lays out the points of a grid.  Depths are spread uniformly in inverse
    depth, since defocus grows linearly in diopters
    """
    if spec.lattice is not None:
        n_u, n_v, n_d = spec.lattice
        us = np.linspace(-1, 1, n_u) if n_u > 1 else np.zeros(1)
        vs = np.linspace(-1, 1, n_v) if n_v > 1 else np.zeros(1)
        ds = depths_from_inverse(rig, np.linspace(0, 1, n_d) if n_d > 1 else np.full(1, 0.5))
        return [
            FrustumPoint(float(u), float(v), float(d))
            for d in ds for v in vs for u in us
        ]

    rng = np.random.default_rng(spec.seed)
    uv = rng.uniform(-1, 1, size=(spec.count, 2))
    ds = depths_from_inverse(rig, rng.uniform(0, 1, size=spec.count))
    return [FrustumPoint(float(u), float(v), float(d)) for (u, v), d in zip(uv, ds)]


def _trace_record(rig: CameraRig, point: FrustumPoint) -> GridRecord:
    try:
        return GridRecord(point, trace_dp_psf(rig, point))
    except VignettedPointError:
        logger.debug("skipping fully vignetted point %s", point)
        return GridRecord(point, None)


def generate_grid(rig: CameraRig, spec: GridSpec) -> PsfGrid:
    """
    Ray-traces a PSF at every point of the grid spec.  Deterministic in the
    spec and its seed; fully vignetted points are kept as skipped records
    """
    points = grid_points(rig, spec)
    logger.info("tracing %d PSFs (%d rays each, ks=%d)", len(points), rig.n_rays, rig.ks)

    records = parallel_map(lambda p: _trace_record(rig, p), points)
    grid = PsfGrid(records=records, ks=rig.ks, spec=spec)
    if grid.skipped_count:
        logger.warning("%d of %d grid points were fully vignetted", grid.skipped_count, len(grid))
    return grid


def reference_points_along_x(
    rig: CameraRig, depth: float, count: int = 5, span: float = 0.8,
) -> List[FrustumPoint]:
    """
    count points at one depth on the horizontal midline, evenly spaced in u
    over [-span, span]; the layout used to calibrate the DP pixel structure
    """
    if count < 1:
        raise ValueError(f"need at least one reference point, got {count}")
    us: Sequence[float] = np.linspace(-span, span, count) if count > 1 else [0.0]
    points = [FrustumPoint(float(u), 0.0, float(depth)) for u in us]
    for p in points:
        _check_frustum(rig, *p)
    return points
