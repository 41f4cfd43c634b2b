"""
The naive DP baseline: a thin-lens circle of confusion cut in half along its
vertical diameter
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from dpsim.psf.engine import frustum_to_world, pinhole_anchor, world_to_frustum
from dpsim.psf.types import AnyPoint, CameraRig, FrustumPoint
from dpsim.sensor import DpPsf, PsfNormalization


def coc_diameter(rig: CameraRig, depth) -> np.ndarray:
    """
    Thin-lens circle of confusion diameter (mm) on the sensor for objects at
    depth (m), using the rig's entrance pupil and focal length
    """
    depth = np.asarray(depth, dtype=float) * 1000.0
    focus = rig.focus_distance * 1000.0
    return rig.pupil.diameter * np.abs(depth - focus) / depth * rig.efl / (focus - rig.efl)


def coc_kernels(rig: CameraRig, depth, ks: Optional[int] = None) -> np.ndarray:
    """
    CoC kernel pairs for an array of depths (m), as an (N, 2, ks, ks) array,
    each pair summing to 1.

    The disc covers every cell whose center is within half the CoC diameter
    of the window center.  Near points put the left half on -x and far points
    on +x; the center column is shared equally
    """
    ks = rig.ks if ks is None else ks
    depth = np.atleast_1d(np.asarray(depth, dtype=float))
    radius_px = coc_diameter(rig, depth) / (2 * rig.dp.ps)

    offsets = np.arange(ks) - ks // 2
    dx, dy = np.meshgrid(offsets, offsets)
    dist = np.sqrt(dx * dx + dy * dy)

    disc = (dist[None, :, :] <= radius_px[:, None, None]).astype(float)
    minus_x = np.where(dx < 0, 1.0, np.where(dx == 0, 0.5, 0.0))
    plus_x = minus_x[:, ::-1]

    near = (depth < rig.focus_distance)[:, None, None]
    left = disc * np.where(near, minus_x, plus_x)
    right = disc * np.where(near, plus_x, minus_x)

    kernels = np.stack([left, right], axis=1)
    return kernels / kernels.sum(axis=(1, 2, 3), keepdims=True)


def coc_dp_psf(rig: CameraRig, point: AnyPoint) -> DpPsf:
    """
    Sum-normalized CoC DP PSF of an object point, anchored at its pinhole
    image
    """
    if isinstance(point, FrustumPoint):
        frustum_to_world(rig, *point)
    else:
        point = world_to_frustum(rig, point)
    kernels = coc_kernels(rig, point.depth)[0]
    return DpPsf(
        left=kernels[0],
        right=kernels[1],
        anchor=pinhole_anchor(rig, point.u, point.v),
        normalization=PsfNormalization.sum_normalized,
    )
