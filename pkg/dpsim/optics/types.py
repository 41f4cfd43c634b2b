from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from functools import cached_property
from typing import Optional, Tuple

import numpy as np


class SurfaceKind(Enum):
    """
    Enumerates the surface kinds a lens file may contain; values are the
    tokens used in the file
    """
    sphere = "S"
    even_asphere = "A"
    stop = "STOP"
    sensor = "SENSOR"

    def __repr__(self) -> str:
        return self.name

    @staticmethod
    def from_token(token: str) -> SurfaceKind:
        """
        Returns a SurfaceKind from the kind column of a lens file
        """
        for kind in SurfaceKind:
            if kind.value == token.upper():
                return kind
        raise ValueError(f"No surface kind {token}")


@dataclass(frozen=True)
class Material:
    """
    The optical medium following a surface; n is used directly at the working
    wavelength, V is carried for completeness
    """
    n: float
    V: float

    def __post_init__(self):
        if not self.n > 1:
            raise ValueError(f"Material index must be > 1, got {self.n}")
        if not self.V > 0:
            raise ValueError(f"Abbe number must be > 0, got {self.V}")

    def __repr__(self) -> str:
        return f"{self.n}/{self.V}"


ZERO_ASPHERE = (0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SurfaceSpec:
    """
    A single surface of a sequential lens.  Radius 0 means planar; the
    material, when present, fills the gap between this surface and the next
    """
    kind: SurfaceKind
    radius: float = 0.0
    thickness: float = 0.0
    material: Optional[Material] = None
    semi_diameter: float = 0.0
    conic: float = 0.0
    asphere_coeffs: Tuple[float, float, float, float, float] = ZERO_ASPHERE

    def __post_init__(self):
        if self.thickness < 0:
            raise ValueError(f"Surface thickness must be >= 0, got {self.thickness}")
        if self.kind != SurfaceKind.sensor and not self.semi_diameter > 0:
            raise ValueError(
                f"{self.kind.name} surface needs a semi-diameter > 0, got {self.semi_diameter}"
            )
        if len(self.asphere_coeffs) != 5:
            raise ValueError("asphere_coeffs must hold a4, a6, a8, a10, a12")
        if self.kind != SurfaceKind.even_asphere and any(self.asphere_coeffs):
            raise ValueError(f"{self.kind.name} surface cannot carry asphere coefficients")

    @property
    def curvature(self) -> float:
        """
        Vertex curvature in 1/mm; zero for planar surfaces
        """
        if self.radius == 0 or self.kind in (SurfaceKind.stop, SurfaceKind.sensor):
            return 0.0
        return 1.0 / self.radius

    @property
    def is_planar(self) -> bool:
        return self.curvature == 0 and not any(self.asphere_coeffs)

    @property
    def needs_iteration(self) -> bool:
        """
        Whether ray intersection needs the Newton solve rather than the closed
        form for spheres and planes
        """
        return self.conic != 0 or any(self.asphere_coeffs)

    @property
    def index_after(self) -> float:
        """
        Refractive index of the medium after this surface (1 for air)
        """
        return self.material.n if self.material is not None else 1.0


@dataclass(frozen=True)
class LensPrescription:
    """
    An ordered list of surfaces ending in the sensor, the position of the
    aperture stop within it, and the design F-number
    """
    surfaces: Tuple[SurfaceSpec, ...]
    stop_index: int
    native_f_number: float
    name: str = ""

    def __post_init__(self):
        kinds = [s.kind for s in self.surfaces]
        if kinds.count(SurfaceKind.stop) != 1:
            raise ValueError(f"Lens needs exactly one stop, found {kinds.count(SurfaceKind.stop)}")
        if kinds.count(SurfaceKind.sensor) != 1 or kinds[-1] != SurfaceKind.sensor:
            raise ValueError("Lens needs exactly one sensor surface, last in order")
        if kinds[self.stop_index] != SurfaceKind.stop:
            raise ValueError(f"Surface {self.stop_index} is not the stop")
        if not self.native_f_number > 0:
            raise ValueError(f"Native F-number must be > 0, got {self.native_f_number}")

    def __repr__(self) -> str:
        return f"{self.name or 'lens'} ({len(self.surfaces) - 1} surfaces, F/{self.native_f_number:g})"

    @property
    def optical_surfaces(self) -> Tuple[SurfaceSpec, ...]:
        """
        Every surface light passes through before the sensor
        """
        return self.surfaces[:-1]

    @property
    def stop(self) -> SurfaceSpec:
        return self.surfaces[self.stop_index]

    @cached_property
    def vertex_z(self) -> Tuple[float, ...]:
        """
        Axial position of each surface vertex, with the first vertex at z=0
        """
        z = [0.0]
        for s in self.surfaces[:-1]:
            z.append(z[-1] + s.thickness)
        return tuple(z)

    @property
    def sensor_z(self) -> float:
        return self.vertex_z[-1]

    @property
    def sensor_gap(self) -> float:
        """
        The air gap between the last optical surface and the sensor
        """
        return self.surfaces[-2].thickness

    def with_surface(self, index: int, surface: SurfaceSpec) -> LensPrescription:
        """
        Returns a copy of this prescription with one surface swapped out
        """
        surfaces = list(self.surfaces)
        surfaces[index] = surface
        return replace(self, surfaces=tuple(surfaces))


@dataclass(frozen=True)
class Ray:
    """
    A single ray in lens space (mm), travelling toward +z
    """
    origin: Tuple[float, float, float]
    direction: Tuple[float, float, float]
    alive: bool = True

    def __post_init__(self):
        norm = float(np.sqrt(np.dot(self.direction, self.direction)))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"Ray direction must be unit length, got |d| = {norm}")
        if self.direction[2] <= 0:
            raise ValueError("Ray must propagate toward +z")

    @staticmethod
    def toward(origin, target) -> Ray:
        """
        Returns the ray leaving origin in the direction of target
        """
        origin = np.asarray(origin, dtype=float)
        d = np.asarray(target, dtype=float) - origin
        d = d / np.sqrt(np.dot(d, d))
        return Ray(tuple(origin), tuple(d))


class TraceStatus(Enum):
    landed = "landed"
    missed = "missed"


class MissReason(IntEnum):
    """
    Why a ray did not reach the sensor.  The integer values are used in the
    vectorised bundle arrays, where 0 means the ray landed
    """
    none = 0
    aperture_clip = 1
    total_internal_reflection = 2
    no_intersection = 3
    diverged = 4


@dataclass(frozen=True)
class TraceOutcome:
    """
    The fate of one traced ray: where and how it landed, or why it did not
    """
    status: TraceStatus
    landing: Optional[Tuple[float, float]] = None
    direction: Optional[Tuple[float, float, float]] = None
    miss_reason: Optional[MissReason] = None

    def __post_init__(self):
        landed = self.status == TraceStatus.landed
        if landed != (self.landing is not None and self.direction is not None):
            raise ValueError("landing and direction must be present iff the ray landed")

    def __repr__(self) -> str:
        if self.status == TraceStatus.landed:
            return f"landed at ({self.landing[0]:.6f}, {self.landing[1]:.6f})"
        return f"missed ({self.miss_reason.name})"


@dataclass
class BundleOutcome:
    """
    Vectorised trace result for N rays.  Arrays are indexed by ray; landing and
    direction hold NaN for rays that missed
    """
    landing: np.ndarray     # (N, 2) mm on the sensor plane
    direction: np.ndarray   # (N, 3) unit vectors
    miss_reason: np.ndarray  # (N,) MissReason values

    @property
    def landed(self) -> np.ndarray:
        return self.miss_reason == MissReason.none

    def __len__(self) -> int:
        return len(self.miss_reason)

    def outcome(self, k: int) -> TraceOutcome:
        """
        Returns the TraceOutcome of the k-th ray in the bundle
        """
        reason = MissReason(int(self.miss_reason[k]))
        if reason == MissReason.none:
            return TraceOutcome(
                TraceStatus.landed,
                landing=(float(self.landing[k, 0]), float(self.landing[k, 1])),
                direction=tuple(float(c) for c in self.direction[k]),
            )
        return TraceOutcome(TraceStatus.missed, miss_reason=reason)
