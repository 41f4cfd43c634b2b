"""
PSF similarity, computed over the left and right kernels together so an
uneven left/right energy split counts against a match
"""
from __future__ import annotations

from typing import Tuple

import numpy as np

from dpsim.errors import ShapeMismatchError
from dpsim.sensor import DpPsf


def _pair(a: DpPsf, b: DpPsf) -> Tuple[np.ndarray, np.ndarray, float]:
    if a.ks != b.ks:
        raise ShapeMismatchError("PSF kernel", a.left.shape, b.left.shape)
    va = a.concatenated().astype(float)
    vb = b.concatenated().astype(float)
    norm = float(np.sqrt(np.dot(va, va) * np.dot(vb, vb)))
    if not norm > 0:
        raise ValueError("PSF similarity is undefined for an all-zero PSF")
    return va, vb, norm


def ncc(a: DpPsf, b: DpPsf) -> float:
    """
    Normalized cross-correlation; 1 for PSFs equal up to scale
    """
    va, vb, norm = _pair(a, b)
    return float(np.dot(va, vb) / norm)


def nsd(a: DpPsf, b: DpPsf) -> float:
    """
    Normalized squared difference; 0 for identical PSFs
    """
    va, vb, norm = _pair(a, b)
    diff = va - vb
    return float(np.dot(diff, diff) / norm)
