from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from dpsim.optics import (
    EntrancePupil,
    LensPrescription,
    locate_entrance_pupil,
    paraxial_efl,
    refocus,
    set_f_number,
)
from dpsim.sensor import DpPixelGeometry, DpPsf, PixelIndex, SensorGeometry


@dataclass(frozen=True)
class CameraRig:
    """
    Everything needed to trace a DP PSF: the lens (already stopped down and
    focused), the sensor, and the DP pixel structure, plus the valid depth
    range (m) and the sampling settings
    """
    lens: LensPrescription
    sensor: SensorGeometry
    dp: DpPixelGeometry
    focus_distance: float
    f_number: float
    depth_range: Tuple[float, float]
    n_rays: int = 4096
    ks: int = 21

    def __post_init__(self):
        d_min, d_max = self.depth_range
        if not 0 < d_min < d_max:
            raise ValueError(f"depth range must satisfy 0 < d_min < d_max, got {self.depth_range}")
        if self.ks < 1 or self.ks % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {self.ks}")
        if self.n_rays < 4:
            raise ValueError(f"need at least 4 rays per point, got {self.n_rays}")
        if abs(self.dp.ps - self.sensor.ps) > 1e-9 * self.sensor.ps:
            raise ValueError(
                f"DP pixel pitch {self.dp.ps} mm does not match the sensor pitch {self.sensor.ps} mm"
            )

    def __repr__(self) -> str:
        return (
            f"CameraRig({self.lens.name or 'lens'} F/{self.f_number:g} @ {self.focus_distance:g} m, "
            f"{self.sensor!r}, {self.dp!r}, {self.depth_range[0]:g}-{self.depth_range[1]:g} m)"
        )

    @classmethod
    def build(
        cls,
        lens: LensPrescription,
        sensor: SensorGeometry,
        dp: DpPixelGeometry,
        focus_distance: float,
        f_number: float,
        depth_range: Tuple[float, float],
        n_rays: int = 4096,
        ks: int = 21,
    ) -> CameraRig:
        """
        Builds a rig from a lens at its design state, applying the F-number and
        focusing it first
        """
        prepared = refocus(set_f_number(lens, f_number), focus_distance)
        return cls(
            lens=prepared,
            sensor=sensor,
            dp=dp,
            focus_distance=focus_distance,
            f_number=f_number,
            depth_range=(float(depth_range[0]), float(depth_range[1])),
            n_rays=n_rays,
            ks=ks,
        )

    @cached_property
    def efl(self) -> float:
        """
        Effective focal length of the lens, mm
        """
        return paraxial_efl(self.lens)

    @cached_property
    def pupil(self) -> EntrancePupil:
        return locate_entrance_pupil(self.lens)

    @property
    def d_min(self) -> float:
        return self.depth_range[0]

    @property
    def d_max(self) -> float:
        return self.depth_range[1]

    def with_dp(self, dp: DpPixelGeometry) -> CameraRig:
        """
        Returns this rig with a different DP pixel structure; the lens and the
        cached optics are shared
        """
        rig = CameraRig(
            lens=self.lens, sensor=self.sensor, dp=dp, focus_distance=self.focus_distance,
            f_number=self.f_number, depth_range=self.depth_range, n_rays=self.n_rays, ks=self.ks,
        )
        for cached in ("efl", "pupil"):
            if cached in self.__dict__:
                rig.__dict__[cached] = self.__dict__[cached]
        return rig


class ObjectPoint(NamedTuple):
    """
    A point in the world: lateral position in mm, depth in m in front of the
    first lens vertex
    """
    x: float
    y: float
    depth: float


class FrustumPoint(NamedTuple):
    """
    A point in the valid imaging frustum: normalized lateral coordinates in
    [-1, 1] and depth in m
    """
    u: float
    v: float
    depth: float


AnyPoint = Union[ObjectPoint, FrustumPoint]


class LandedBundle(NamedTuple):
    """
    The rays from one object point that reached the sensor, before any DP
    pixel is involved.

    :param center: where the PSF window is centered on the sensor plane (the
                   chief-ray landing, or the landed centroid if the chief ray
                   was clipped)
    :param anchor: the sensor pixel containing center
    """
    landing: np.ndarray     # (M, 2) mm
    direction: np.ndarray   # (M, 3)
    n_rays: int
    center: Tuple[float, float]
    anchor: PixelIndex
    chief_clipped: bool


@dataclass(frozen=True)
class GridSpec:
    """
    How to lay out the points of a PSF grid: either a full lattice of
    (n_u, n_v, n_d) points, or count seeded random points
    """
    lattice: Optional[Tuple[int, int, int]] = None
    count: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.lattice is not None and self.count:
            raise ValueError("grid spec takes a lattice or a count, not both")
        if self.lattice is None and self.count < 1:
            raise ValueError("grid spec is empty; give a lattice or a positive count")
        if self.lattice is not None and (len(self.lattice) != 3 or min(self.lattice) < 1):
            raise ValueError(f"lattice needs three positive counts, got {self.lattice}")

    def __len__(self) -> int:
        if self.lattice is not None:
            n_u, n_v, n_d = self.lattice
            return n_u * n_v * n_d
        return self.count

    def to_dict(self) -> Dict[str, Any]:
        if self.lattice is not None:
            return {"lattice": list(self.lattice), "seed": self.seed}
        return {"count": self.count, "seed": self.seed}

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> GridSpec:
        lattice = dct.get("lattice")
        return cls(
            lattice=tuple(int(n) for n in lattice) if lattice is not None else None,
            count=int(dct.get("count", 0)),
            seed=int(dct.get("seed", 0)),
        )


class GridRecord(NamedTuple):
    """
    One grid point and its PSF; psf is None if the point was fully vignetted
    """
    point: FrustumPoint
    psf: Optional[DpPsf]

    @property
    def skipped(self) -> bool:
        return self.psf is None


@dataclass
class PsfGrid:
    """
    A set of ray-traced PSFs over the frustum, in sampling order
    """
    records: List[GridRecord]
    ks: int
    spec: Optional[GridSpec] = None

    def __len__(self) -> int:
        return len(self.records)

    def __repr__(self) -> str:
        return f"PsfGrid({len(self.records)} records, {self.skipped_count} skipped, ks={self.ks})"

    @property
    def skipped_count(self) -> int:
        return sum(1 for r in self.records if r.skipped)

    @property
    def traced(self) -> List[GridRecord]:
        """
        The records that hold a PSF
        """
        return [r for r in self.records if not r.skipped]
