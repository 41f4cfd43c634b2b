"""
The .dppsf binary: a list of PSFs with the frustum points they belong to.

Layout (little-endian): magic b"DPPSF\\x02", u32 ks, u32 record count, then per
record f32 u, f32 v, f32 depth_m, i32 anchor_i, i32 anchor_j, u32 missed,
u32 n_rays, u32 window_misses, u8 normalization (0 raw counts, 1 max, 2 sum)
and 2 * ks * ks f32 (left kernel row-major, then right).  A fully vignetted
point is stored with anchor (-1, -1), missed 0xFFFFFFFF and zero kernels.

Version 1 files (magic b"DPPSF\\x01") lack n_rays, window_misses and
normalization; they are still read, with the normalization guessed from the
kernels.
"""
from __future__ import annotations

import logging
from typing import List, Sequence

import numpy as np

from dpsim.errors import PsfFormatError
from dpsim.psf.types import FrustumPoint, GridRecord
from dpsim.sensor import DpPsf, PixelIndex, PsfNormalization

logger = logging.getLogger(__name__)

MAGIC = b"DPPSF\x02"
MAGIC_V1 = b"DPPSF\x01"
SKIPPED = 0xFFFFFFFF

_HEADER = np.dtype([("ks", "<u4"), ("count", "<u4")])

#: on-disk normalization codes, by position
_NORMALIZATIONS = (
    PsfNormalization.raw_counts,
    PsfNormalization.max_normalized,
    PsfNormalization.sum_normalized,
)


def _record_dtype(ks: int, version: int = 2) -> np.dtype:
    fields = [
        ("u", "<f4"),
        ("v", "<f4"),
        ("depth", "<f4"),
        ("anchor_i", "<i4"),
        ("anchor_j", "<i4"),
        ("missed", "<u4"),
    ]
    if version >= 2:
        fields += [("n_rays", "<u4"), ("window_misses", "<u4"), ("normalization", "u1")]
    return np.dtype(fields + [("kernels", "<f4", (2, ks, ks))])


def write_dppsf(records: Sequence[GridRecord], ks: int) -> bytes:
    """
    Encodes records as a .dppsf file.  Every PSF must have kernel size ks
    """
    table = np.zeros(len(records), dtype=_record_dtype(ks))
    for k, (point, psf) in enumerate(records):
        table["u"][k], table["v"][k], table["depth"][k] = point.u, point.v, point.depth
        if psf is None:
            table["anchor_i"][k] = table["anchor_j"][k] = -1
            table["missed"][k] = SKIPPED
            continue
        if psf.ks != ks:
            raise ValueError(f"record {k} has ks={psf.ks}, the file holds ks={ks}")
        table["anchor_i"][k], table["anchor_j"][k] = psf.anchor
        table["missed"][k] = psf.missed_count
        table["n_rays"][k] = psf.n_rays
        table["window_misses"][k] = psf.window_misses
        table["normalization"][k] = _NORMALIZATIONS.index(psf.normalization)
        table["kernels"][k] = psf.stacked()

    header = np.array([(ks, len(records))], dtype=_HEADER)
    return MAGIC + header.tobytes() + table.tobytes()


def _guess_normalization(kernels: np.ndarray) -> PsfNormalization:
    if np.array_equal(kernels, np.round(kernels)) and kernels.sum() > 1:
        return PsfNormalization.raw_counts
    if abs(float(kernels.sum(dtype=np.float64)) - 1) < 1e-5:
        return PsfNormalization.sum_normalized
    return PsfNormalization.max_normalized


def _decode(row, version: int) -> DpPsf:
    kernels = np.array(row["kernels"], dtype=np.float64)
    missed = int(row["missed"])
    window_misses = 0
    if version >= 2:
        code = int(row["normalization"])
        if code >= len(_NORMALIZATIONS):
            raise PsfFormatError(f"unknown normalization code {code} in .dppsf record")
        normalization = _NORMALIZATIONS[code]
        n_rays = int(row["n_rays"])
        window_misses = int(row["window_misses"])
    else:
        normalization = _guess_normalization(kernels)
        n_rays = int(kernels.sum()) + missed if normalization == PsfNormalization.raw_counts else 0

    if normalization == PsfNormalization.raw_counts:
        kernels = kernels.astype(np.int64)
    return DpPsf(
        left=kernels[0],
        right=kernels[1],
        anchor=PixelIndex(int(row["anchor_i"]), int(row["anchor_j"])),
        missed_count=missed,
        normalization=normalization,
        window_misses=window_misses,
        n_rays=n_rays,
    )


def _version(data: bytes) -> int:
    if data[: len(MAGIC)] == MAGIC:
        return 2
    if data[: len(MAGIC_V1)] == MAGIC_V1:
        return 1
    raise PsfFormatError("not a .dppsf file (bad magic)")


def read_dppsf(data: bytes) -> List[GridRecord]:
    """
    Decodes a .dppsf file.  Raw-count PSFs come back with integer kernels.

    :raises PsfFormatError: on a bad magic number or a truncated payload
    """
    version = _version(data)
    offset = len(MAGIC)
    if len(data) < offset + _HEADER.itemsize:
        raise PsfFormatError("truncated .dppsf header")

    header = np.frombuffer(data, dtype=_HEADER, count=1, offset=offset)[0]
    ks, count = int(header["ks"]), int(header["count"])
    if ks < 1 or ks % 2 != 1:
        raise PsfFormatError(f".dppsf kernel size must be odd, got {ks}")

    dtype = _record_dtype(ks, version)
    offset += _HEADER.itemsize
    expected = offset + count * dtype.itemsize
    if len(data) != expected:
        raise PsfFormatError(f".dppsf payload is {len(data)} bytes, expected {expected}")
    table = np.frombuffer(data, dtype=dtype, count=count, offset=offset)

    records = []
    for row in table:
        point = FrustumPoint(float(row["u"]), float(row["v"]), float(row["depth"]))
        if int(row["missed"]) == SKIPPED:
            records.append(GridRecord(point, None))
        else:
            records.append(GridRecord(point, _decode(row, version)))

    logger.debug("read %d PSF records (ks=%d, version %d)", len(records), ks, version)
    return records


def dppsf_kernel_size(data: bytes) -> int:
    """
    Reads just the kernel size from a .dppsf file
    """
    _version(data)
    if len(data) < len(MAGIC) + _HEADER.itemsize:
        raise PsfFormatError("not a .dppsf file")
    return int(np.frombuffer(data, dtype=_HEADER, count=1, offset=len(MAGIC))[0]["ks"])
