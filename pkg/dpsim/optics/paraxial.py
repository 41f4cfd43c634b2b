"""
First-order (paraxial) optics: focal length, pupils, focusing, and the
aperture, all from y-nu ray traces through the prescription
"""
from __future__ import annotations

from dataclasses import replace
import logging
import math
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from dpsim.errors import OpticsError
from dpsim.optics.types import LensPrescription

logger = logging.getLogger(__name__)

#: Default pupil sampling, 64 rings x 64 spokes
DEFAULT_PUPIL_SAMPLES = 4096


class EntrancePupil(NamedTuple):
    """
    The image of the stop in object space: its axial position (mm, relative to
    the first vertex) and its diameter (mm)
    """
    position: float
    diameter: float

    @property
    def radius(self) -> float:
        return self.diameter / 2


def _yu_trace(
    lens: LensPrescription, y: float, u: float, last: Optional[int] = None,
) -> Tuple[List[float], List[float]]:
    """
    Traces a paraxial ray starting at the first vertex with height y and
    object-space slope u.

    :param last: index of the last surface to refract at; defaults to the last
                 optical surface
    :returns: the ray height at each surface, and the slope after each surface
    """
    surfaces = lens.optical_surfaces
    if last is None:
        last = len(surfaces) - 1

    heights, slopes = [], []
    n = 1.0
    for i, s in enumerate(surfaces[: last + 1]):
        n2 = s.index_after
        power = (n2 - n) * s.curvature
        u = (n * u - y * power) / n2
        n = n2
        heights.append(y)
        slopes.append(u)
        if i < last:
            y = y + s.thickness * u
    return heights, slopes


def paraxial_efl(lens: LensPrescription) -> float:
    """
    Returns the effective focal length (mm) of the lens
    """
    _, slopes = _yu_trace(lens, 1.0, 0.0)
    if abs(slopes[-1]) < 1e-12:
        raise OpticsError(f"{lens} is afocal; it has no focal length")
    return -1.0 / slopes[-1]


def back_focal_distance(lens: LensPrescription) -> float:
    """
    Returns the distance (mm) from the last optical surface to the paraxial
    focus for an object at infinity
    """
    heights, slopes = _yu_trace(lens, 1.0, 0.0)
    if abs(slopes[-1]) < 1e-12:
        raise OpticsError(f"{lens} is afocal; it has no back focus")
    return -heights[-1] / slopes[-1]


def paraxial_image_distance(lens: LensPrescription, distance_mm: float) -> float:
    """
    Returns the distance (mm) from the last optical surface to the paraxial
    image of an on-axis point distance_mm in front of the first vertex
    """
    if math.isinf(distance_mm):
        return back_focal_distance(lens)

    heights, slopes = _yu_trace(lens, 1.0, 1.0 / distance_mm)
    if not slopes[-1] < 0:
        raise OpticsError(f"an object at {distance_mm} mm forms no real image through {lens}")
    return -heights[-1] / slopes[-1]


def locate_entrance_pupil(lens: LensPrescription) -> EntrancePupil:
    """
    Images the stop backward through the surfaces in front of it, returning the
    entrance pupil's axial position and diameter
    """
    if lens.stop_index == 0:
        return EntrancePupil(0.0, 2 * lens.stop.semi_diameter)

    # heights at the stop are linear in (y, u) at the first vertex:
    # y_stop = a*y + b*u
    a = _yu_trace(lens, 1.0, 0.0, last=lens.stop_index)[0][-1]
    b = _yu_trace(lens, 0.0, 1.0, last=lens.stop_index)[0][-1]
    if abs(a) < 1e-12:
        raise OpticsError(f"{lens} is telecentric in object space; its pupil is at infinity")

    return EntrancePupil(b / a, 2 * lens.stop.semi_diameter / abs(a))


def set_f_number(lens: LensPrescription, f_number: float) -> LensPrescription:
    """
    Stops the lens down to the given F-number by shrinking the stop; the lens
    cannot be opened past its design aperture
    """
    if f_number < lens.native_f_number:
        raise ValueError(
            f"F/{f_number:g} is faster than {lens}'s design aperture F/{lens.native_f_number:g}"
        )
    if f_number == lens.native_f_number:
        return lens

    stop = lens.stop
    scaled = replace(stop, semi_diameter=stop.semi_diameter * lens.native_f_number / f_number)
    return lens.with_surface(lens.stop_index, scaled)


def refocus(lens: LensPrescription, focus_distance: float) -> LensPrescription:
    """
    Focuses the lens on an on-axis point focus_distance metres in front of the
    first vertex by moving the sensor to the paraxial image

    :raises OpticsError: if the point forms no real image behind the lens
    """
    distance_mm = focus_distance * 1000.0
    efl = paraxial_efl(lens)
    if not distance_mm > efl:
        raise OpticsError(
            f"cannot focus at {focus_distance} m; it is inside the {efl:.2f} mm focal length"
        )

    gap = paraxial_image_distance(lens, distance_mm)
    if not gap > 0:
        raise OpticsError(f"cannot focus at {focus_distance} m; the image falls inside the lens")

    last = len(lens.surfaces) - 2
    logger.debug("refocus %s to %g m: sensor gap %.4f mm", lens.name, focus_distance, gap)
    return lens.with_surface(last, replace(lens.surfaces[last], thickness=gap))


def _default_spokes(n: int) -> int:
    """
    Picks the number of spokes for n pupil samples: the smallest multiple of 4
    that is at least sqrt(n) and divides n
    """
    spokes = 4 * math.ceil(math.sqrt(n) / 4)
    while spokes <= n:
        if n % spokes == 0:
            return spokes
        spokes += 4
    raise ValueError(f"{n} pupil samples cannot be split into rings x (multiple of 4) spokes")


def sample_pupil(
    pupil: EntrancePupil, n: int = DEFAULT_PUPIL_SAMPLES, spokes: Optional[int] = None,
) -> np.ndarray:
    """
    Returns n aim points (an (n, 2) array, mm) on an equal-area polar grid over
    the pupil.  The set is exactly closed under x and y mirroring; only the
    first quadrant is computed and the rest is made by sign flips.
    """
    if n < 4:
        raise ValueError(f"need at least 4 pupil samples, got {n}")
    if spokes is None:
        spokes = _default_spokes(n)
    if spokes % 4 != 0 or n % spokes != 0:
        raise ValueError(f"{n} pupil samples cannot use {spokes} spokes")
    rings = n // spokes

    radii = pupil.radius * np.sqrt((np.arange(rings) + 0.5) / rings)
    phi = (np.arange(spokes // 4) + 0.5) * 2 * np.pi / spokes
    cx, sy = np.cos(phi), np.sin(phi)

    x = np.concatenate([cx, -cx[::-1], -cx, cx[::-1]])
    y = np.concatenate([sy, sy[::-1], -sy, -sy[::-1]])

    points = np.stack([
        (radii[:, None] * x[None, :]).ravel(),
        (radii[:, None] * y[None, :]).ravel(),
    ], axis=-1)
    return points
