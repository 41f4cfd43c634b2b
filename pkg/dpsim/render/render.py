"""
Rendering DP image pairs from an all-in-focus image, a depth map and a PSF
per pixel.

Each output pixel is the true convolution of its neighborhood with that
pixel's own kernel pair, on an input padded by replicating its border.
Occlusion is ignored; every pixel blurs on its own.
"""
from __future__ import annotations

import logging
from typing import List, Protocol, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dpsim.errors import ShapeMismatchError
from dpsim.psf import CameraRig, FrustumPoint, coc_kernels, normalize, trace_dp_psf
from dpsim.render.types import DpImagePair, PsfMap, RgbdFrame
from dpsim.util import parallel_map

logger = logging.getLogger(__name__)

#: Output rows rendered per work unit
BLOCK_ROWS = 32


class PsfSource(Protocol):
    """
    Anything that gives sum-normalized kernel pairs, (N, 2, ks, ks), for
    arrays of frustum points
    """
    ks: int

    def kernels(self, u: np.ndarray, v: np.ndarray, depth: np.ndarray) -> np.ndarray:
        ...


class CocSource:
    """
    The CoC baseline as a PSF source
    """
    def __init__(self, rig: CameraRig):
        self.rig = rig
        self.ks = rig.ks

    def kernels(self, u, v, depth) -> np.ndarray:
        return coc_kernels(self.rig, np.asarray(depth, dtype=float).ravel(), self.ks)


class TracerSource:
    """
    Ray-traced PSFs as a PSF source: exact, and very slow for whole frames
    """
    def __init__(self, rig: CameraRig):
        self.rig = rig
        self.ks = rig.ks

    def _one(self, point: Tuple[float, float, float]) -> np.ndarray:
        return normalize(trace_dp_psf(self.rig, FrustumPoint(*point)), "sum").stacked()

    def kernels(self, u, v, depth) -> np.ndarray:
        points = np.stack([np.ravel(u), np.ravel(v), np.ravel(depth)], axis=-1).tolist()
        return np.stack(parallel_map(self._one, points))


def pixel_coordinates(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Normalized frustum coordinates (u, v) of pixel centers, each H x W
    """
    u = 2 * (np.arange(width) + 0.5) / width - 1
    v = 2 * (np.arange(height) + 0.5) / height - 1
    return np.broadcast_to(u[None, :], (height, width)), np.broadcast_to(v[:, None], (height, width))


def _block_kernels(source: PsfSource, depth: np.ndarray, rows: Tuple[int, int]) -> np.ndarray:
    height, width = depth.shape
    r0, r1 = rows
    u, v = pixel_coordinates(height, width)
    kernels = source.kernels(u[r0:r1].ravel(), v[r0:r1].ravel(), depth[r0:r1].ravel())
    return np.asarray(kernels, dtype=np.float32).reshape(r1 - r0, width, 2, source.ks, source.ks)


def build_psf_map(source: PsfSource, rig: CameraRig, depth: np.ndarray) -> PsfMap:
    """
    Looks up a kernel pair for every pixel of a depth map (m)
    """
    depth = np.asarray(depth, dtype=float)
    if source.ks != rig.ks:
        raise ValueError(f"PSF source gives ks={source.ks} but the rig uses ks={rig.ks}")
    height = depth.shape[0]
    blocks = parallel_map(
        lambda rows: _block_kernels(source, depth, rows), _row_blocks(height),
    )
    kernels = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, depth.shape[1], 2, rig.ks, rig.ks))
    return PsfMap(kernels)


def _row_blocks(height: int, block: int = BLOCK_ROWS) -> List[Tuple[int, int]]:
    return [(r, min(r + block, height)) for r in range(0, height, block)]


def _as_image(image: Union[RgbdFrame, np.ndarray]) -> Tuple[np.ndarray, bool]:
    """
    The image as H x W x C float64, and whether it came in as H x W
    """
    rgb = image.rgb if isinstance(image, RgbdFrame) else np.asarray(image, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb[:, :, None], True
    if rgb.ndim != 3:
        raise ValueError(f"image must be H x W or H x W x C, got {rgb.shape}")
    return rgb, False


def _convolve_rows(padded: np.ndarray, kernels: np.ndarray, r0: int) -> np.ndarray:
    """
    Renders output rows r0 .. r0 + len(kernels) from the padded image; returns
    (2, rows, W, C)
    """
    ks = kernels.shape[-1]
    rows = kernels.shape[0]
    windows = sliding_window_view(padded[r0:r0 + rows + ks - 1], (ks, ks), axis=(0, 1))
    flipped = kernels[..., ::-1, ::-1].astype(np.float64)
    return np.einsum("rwcab,rwsab->srwc", windows, flipped)


def render_dp(image: Union[RgbdFrame, np.ndarray], psfs: PsfMap) -> DpImagePair:
    """
    Renders the left and right DP images of an all-in-focus image with one
    kernel pair per pixel.  Channels are processed independently
    """
    rgb, flat = _as_image(image)
    if rgb.shape[:2] != psfs.shape:
        raise ShapeMismatchError("image vs PSF map", rgb.shape[:2], psfs.shape)

    pad = (psfs.ks - 1) // 2
    padded = np.pad(rgb, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    blocks = parallel_map(
        lambda rows: _convolve_rows(padded, psfs.kernels[rows[0]:rows[1]], rows[0]),
        _row_blocks(rgb.shape[0]),
    )
    return _assemble(blocks, rgb.shape, flat)


def render_with_source(frame: RgbdFrame, source: PsfSource) -> DpImagePair:
    """
    Renders a frame, looking kernels up one row block at a time so the full
    PSF map never has to be held in memory
    """
    rgb = frame.rgb
    pad = (source.ks - 1) // 2
    padded = np.pad(rgb, ((pad, pad), (pad, pad), (0, 0)), mode="edge")

    def work(rows: Tuple[int, int]) -> np.ndarray:
        kernels = _block_kernels(source, frame.depth, rows)
        return _convolve_rows(padded, kernels, rows[0])

    logger.info("rendering %r with ks=%d kernels", frame, source.ks)
    return _assemble(parallel_map(work, _row_blocks(rgb.shape[0])), rgb.shape, False)


def _assemble(blocks: List[np.ndarray], shape, flat: bool) -> DpImagePair:
    if blocks:
        out = np.concatenate(blocks, axis=1)
    else:
        out = np.zeros((2,) + tuple(shape))
    left, right = out[0], out[1]
    if flat:
        left, right = left[:, :, 0], right[:, :, 0]
    return DpImagePair(left=left, right=right)


def stack_dp(pair: DpImagePair) -> np.ndarray:
    """
    The pair as one H x W x 2C array, left channels first
    """
    left, right = pair.left, pair.right
    if left.ndim == 2:
        left, right = left[:, :, None], right[:, :, None]
    return np.concatenate([left, right], axis=-1)
