from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Tuple

import numpy as np

from dpsim.errors import ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class RgbdFrame:
    """
    An all-in-focus RGB image (H x W x 3, values in [0, 1]) and its depth map
    (H x W, m).  Build one with ingest to clamp the depths into the valid
    range
    """
    rgb: np.ndarray
    depth: np.ndarray
    clamped_count: int = 0

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ValueError(f"RGB image must be H x W x 3, got {self.rgb.shape}")
        if self.depth.shape != self.rgb.shape[:2]:
            raise ShapeMismatchError("depth map", self.depth.shape, self.rgb.shape[:2])

    def __repr__(self) -> str:
        return f"RgbdFrame({self.shape[1]}x{self.shape[0]}, {self.clamped_count} depths clamped)"

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depth.shape

    @classmethod
    def ingest(cls, rgb: np.ndarray, depth: np.ndarray, depth_range: Tuple[float, float]) -> RgbdFrame:
        """
        Builds a frame, clamping depths (including non-finite ones) into
        depth_range and counting how many needed it
        """
        rgb = np.asarray(rgb, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        if rgb.ndim == 3 and depth.shape != rgb.shape[:2]:
            raise ShapeMismatchError("depth map", depth.shape, rgb.shape[:2])

        d_min, d_max = depth_range
        fixed = np.nan_to_num(depth, nan=d_max, posinf=d_max, neginf=d_min)
        clamped = np.clip(fixed, d_min, d_max)
        count = int(np.count_nonzero(clamped != depth))
        if count:
            logger.warning("clamped %d depth values into %g-%g m", count, d_min, d_max)
        return cls(rgb=rgb, depth=clamped, clamped_count=count)


@dataclass(eq=False)
class DpImagePair:
    """
    The rendered left and right DP images, each shaped like the source image
    """
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise ShapeMismatchError("DP image pair", self.left.shape, self.right.shape)


@dataclass(eq=False)
class PsfMap:
    """
    One sum-normalized DP kernel pair per pixel, (H, W, 2, ks, ks)
    """
    kernels: np.ndarray

    def __post_init__(self):
        k = self.kernels
        if k.ndim != 5 or k.shape[2] != 2 or k.shape[3] != k.shape[4] or k.shape[3] % 2 != 1:
            raise ValueError(f"PSF map must be H x W x 2 x ks x ks with odd ks, got {k.shape}")
        sums = k.sum(axis=(2, 3, 4), dtype=np.float64)
        if k.size and not np.all(np.abs(sums - 1) <= 1e-5):
            raise ValueError(f"PSF map kernels must each sum to 1, worst is {sums.flat[np.argmax(np.abs(sums - 1))]}")

    def __repr__(self) -> str:
        return f"PsfMap({self.shape[1]}x{self.shape[0]}, ks={self.ks})"

    @property
    def shape(self) -> Tuple[int, int]:
        return self.kernels.shape[:2]

    @property
    def ks(self) -> int:
        return self.kernels.shape[3]
