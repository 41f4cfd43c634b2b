from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Any, Dict, NamedTuple

import numpy as np

#: DP pixel structure that best reproduces the measured PSFs, in units of the
#: pixel pitch
DEFAULT_H_OVER_PS = 0.78
DEFAULT_F_OVER_PS = 1.44
DEFAULT_W_OVER_PS = 0.30
DEFAULT_R_OVER_PS = 0.50


@dataclass(frozen=True)
class DpPixelGeometry:
    """
    The simplified DP pixel: a thin microlens of radius r and focal length f
    sitting h above two sub-pixels of width w, in a pixel of pitch ps.  All
    lengths in mm
    """
    ps: float
    r: float
    f: float
    h: float
    w: float

    def __post_init__(self):
        if not self.ps > 0:
            raise ValueError(f"pixel pitch must be > 0, got {self.ps}")
        if not self.f > self.h > 0:
            raise ValueError(f"microlens needs f > h > 0, got f={self.f}, h={self.h}")
        if not 0 < self.w <= self.ps / 2 * (1 + 1e-12):
            raise ValueError(f"sub-pixel width must be in (0, ps/2], got {self.w}")
        if not 0 < self.r <= self.ps / 2 * (1 + 1e-12):
            raise ValueError(f"microlens radius must be in (0, ps/2], got {self.r}")

    def __repr__(self) -> str:
        ratios = self.ratios
        return (
            f"DpPixel(ps={self.ps:g}mm, h={ratios['h']:.2f}ps, f={ratios['f']:.2f}ps, "
            f"w={ratios['w']:.2f}ps, r={ratios['r']:.2f}ps)"
        )

    @classmethod
    def from_ratios(
        cls,
        ps: float,
        h: float = DEFAULT_H_OVER_PS,
        f: float = DEFAULT_F_OVER_PS,
        w: float = DEFAULT_W_OVER_PS,
        r: float = DEFAULT_R_OVER_PS,
    ) -> DpPixelGeometry:
        """
        Builds a geometry from lengths given as multiples of the pixel pitch;
        the defaults are the calibrated structure
        """
        return cls(ps=ps, r=r * ps, f=f * ps, h=h * ps, w=w * ps)

    @property
    def ratios(self) -> Dict[str, float]:
        """
        The structural parameters as multiples of the pixel pitch
        """
        return {
            "h": self.h / self.ps,
            "f": self.f / self.ps,
            "w": self.w / self.ps,
            "r": self.r / self.ps,
        }

    def to_dict(self) -> Dict[str, Any]:
        """
        Returns this geometry in its JSON config form
        """
        ratios = self.ratios
        return {
            "ps_mm": self.ps,
            "r_over_ps": ratios["r"],
            "f_over_ps": ratios["f"],
            "h_over_ps": ratios["h"],
            "w_over_ps": ratios["w"],
        }

    @classmethod
    def from_dict(cls, dct: Dict[str, Any]) -> DpPixelGeometry:
        """
        Given a dict like the one from to_dict, returns a DpPixelGeometry.  Only
        ps_mm is required; missing ratios take the calibrated defaults
        """
        if "ps_mm" not in dct:
            raise ValueError("Key ps_mm is required")
        if unknown := set(dct.keys()) - {"ps_mm", "r_over_ps", "f_over_ps", "h_over_ps", "w_over_ps"}:
            raise ValueError(f"Unknown DP pixel keys {', '.join(sorted(unknown))}")

        return cls.from_ratios(
            float(dct["ps_mm"]),
            h=float(dct.get("h_over_ps", DEFAULT_H_OVER_PS)),
            f=float(dct.get("f_over_ps", DEFAULT_F_OVER_PS)),
            w=float(dct.get("w_over_ps", DEFAULT_W_OVER_PS)),
            r=float(dct.get("r_over_ps", DEFAULT_R_OVER_PS)),
        )

    def with_ps(self, ps: float) -> DpPixelGeometry:
        """
        Returns the same structure (same ratios) at a different pitch
        """
        ratios = self.ratios
        return DpPixelGeometry.from_ratios(ps, **ratios)


@dataclass(frozen=True)
class SensorGeometry:
    """
    A pixel grid of square pixels, centered on the optical axis
    """
    width: float
    height: float
    cols: int
    rows: int

    def __post_init__(self):
        if self.cols < 1 or self.rows < 1:
            raise ValueError(f"sensor needs at least one pixel, got {self.cols}x{self.rows}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"sensor extent must be positive, got {self.width}x{self.height}")
        if abs(self.width / self.cols - self.height / self.rows) > 1e-9:
            raise ValueError(
                f"pixels must be square: {self.width}/{self.cols} != {self.height}/{self.rows}"
            )

    def __repr__(self) -> str:
        return f"Sensor({self.width:g}x{self.height:g}mm, {self.cols}x{self.rows}px)"

    @property
    def ps(self) -> float:
        """
        Pixel pitch in mm
        """
        return self.width / self.cols

    @classmethod
    def window(cls, ps: float, ks: int) -> SensorGeometry:
        """
        A ks x ks grid of pitch ps centered on the origin; PSF windows are
        binned on one of these, shifted onto each object point's chief ray
        """
        return cls(width=ks * ps, height=ks * ps, cols=ks, rows=ks)


class SubPixel(IntEnum):
    """
    Which sub-pixel a ray ends up in.  Values are used in vectorised arrays
    """
    missed = 0
    left = 1
    right = 2

    def __repr__(self) -> str:
        return self.name


class PixelIndex(NamedTuple):
    """
    A pixel's column (i) and row (j)
    """
    i: int
    j: int


class PsfNormalization(Enum):
    raw_counts = "raw_counts"
    max_normalized = "max_normalized"
    sum_normalized = "sum_normalized"


@dataclass(eq=False)
class DpPsf:
    """
    A left/right pair of ks x ks PSF kernels, anchored at a sensor pixel.

    Raw-count PSFs hold integer ray counts, and left + right + missed_count is
    always the number of rays emitted.  window_misses is the part of
    missed_count made of rays that were assigned a sub-pixel but fell outside
    the window
    """
    left: np.ndarray
    right: np.ndarray
    anchor: PixelIndex
    missed_count: int = 0
    normalization: PsfNormalization = PsfNormalization.raw_counts
    window_misses: int = 0
    n_rays: int = 0

    def __post_init__(self):
        if self.left.shape != self.right.shape or self.left.ndim != 2:
            raise ValueError(
                f"left/right kernels must be matching 2D arrays, got {self.left.shape} and {self.right.shape}"
            )
        if self.left.shape[0] != self.left.shape[1] or self.left.shape[0] % 2 != 1:
            raise ValueError(f"kernels must be square with odd size, got {self.left.shape}")

    def __repr__(self) -> str:
        return (
            f"DpPsf(ks={self.ks}, anchor=({self.anchor.i}, {self.anchor.j}), "
            f"L={self.left.sum():.6g}, R={self.right.sum():.6g}, missed={self.missed_count}, "
            f"{self.normalization.value})"
        )

    @property
    def ks(self) -> int:
        return self.left.shape[0]

    @property
    def left_total(self) -> float:
        return float(self.left.sum())

    @property
    def right_total(self) -> float:
        return float(self.right.sum())

    @property
    def landed_count(self) -> int:
        """
        Rays that reached a sub-pixel inside the window (raw counts only)
        """
        return int(round(self.left_total + self.right_total))

    def concatenated(self) -> np.ndarray:
        """
        Both kernels as one flat vector, left first
        """
        return np.concatenate([self.left.ravel(), self.right.ravel()])

    def stacked(self) -> np.ndarray:
        """
        Both kernels as a (2, ks, ks) array, left first
        """
        return np.stack([self.left, self.right])

    def centroid_x(self, side: SubPixel) -> float:
        """
        Horizontal energy centroid of one kernel, in pixels from the window
        center
        """
        kernel = self.left if side == SubPixel.left else self.right
        total = kernel.sum()
        if total == 0:
            raise ValueError(f"{side.name} kernel is empty; it has no centroid")
        offsets = np.arange(self.ks) - self.ks // 2
        return float((kernel.sum(axis=0) * offsets).sum() / total)

    def disparity(self) -> float:
        """
        centroid_x(left) - centroid_x(right), in pixels; its sign tells near
        from far
        """
        return self.centroid_x(SubPixel.left) - self.centroid_x(SubPixel.right)

    def with_kernels(
        self, left: np.ndarray, right: np.ndarray, normalization: PsfNormalization,
    ) -> DpPsf:
        """
        Returns a copy of this PSF with new kernel values
        """
        return replace(self, left=left, right=right, normalization=normalization)
