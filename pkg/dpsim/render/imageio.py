"""
Float and 8-bit image files: PFM ("PF" color, "Pf" single channel) and PPM
("P6").

PFM rows are stored bottom to top as float32; a negative scale means
little-endian data.  PPM samples are quantized as floor(255 * x + 0.5) after
clipping to [0, 1].
"""
from __future__ import annotations

from pathlib import Path
import re
from typing import List, Tuple, Union

import numpy as np

from dpsim.errors import ImageFormatError
from dpsim.util import atomic_write

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _header(data: bytes, count: int) -> Tuple[List[bytes], int]:
    """
    Reads count whitespace-separated header tokens (skipping # comments) and
    returns them with the offset of the payload, which starts after exactly
    one whitespace byte
    """
    tokens, offset = [], 0
    for _ in range(count):
        match = _TOKEN.match(data, offset)
        if match is None:
            raise ImageFormatError("truncated image header")
        tokens.append(match.group(1))
        offset = match.end()
    if offset >= len(data) or not data[offset:offset + 1].isspace():
        raise ImageFormatError("image header is not followed by a payload")
    return tokens, offset + 1


def _dims(tokens: List[bytes]) -> Tuple[int, int]:
    try:
        width, height = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise ImageFormatError(f"bad image size {tokens[0]!r} x {tokens[1]!r}")
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad image size {width} x {height}")
    return width, height


def read_pfm(data: bytes) -> np.ndarray:
    """
    Decodes a PFM file into an H x W x 3 (PF) or H x W (Pf) float32 array
    with row 0 at the top
    """
    tokens, offset = _header(data, 4)
    magic = tokens[0]
    if magic not in (b"PF", b"Pf"):
        raise ImageFormatError(f"not a PFM file (magic {magic!r})")
    width, height = _dims(tokens[1:3])
    try:
        scale = float(tokens[3])
    except ValueError:
        raise ImageFormatError(f"bad PFM scale {tokens[3]!r}")
    if scale == 0:
        raise ImageFormatError("PFM scale must be nonzero")

    channels = 3 if magic == b"PF" else 1
    dtype = np.dtype("<f4" if scale < 0 else ">f4")
    expected = width * height * channels
    if len(data) - offset < expected * 4:
        raise ImageFormatError(f"PFM payload is truncated: need {expected * 4} bytes, got {len(data) - offset}")

    pixels = np.frombuffer(data, dtype=dtype, count=expected, offset=offset).astype(np.float32)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(pixels.reshape(shape)).copy()


def write_pfm(image: np.ndarray) -> bytes:
    """
    Encodes an H x W x 3 or H x W array as little-endian PFM
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 3 and image.shape[2] == 3:
        magic = b"PF"
    elif image.ndim == 2:
        magic = b"Pf"
    else:
        raise ValueError(f"PFM holds H x W x 3 or H x W images, got {image.shape}")
    height, width = image.shape[:2]
    header = magic + f"\n{width} {height}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(np.flipud(image), dtype="<f4").tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    """
    Decodes a binary PPM (P6) into an H x W x 3 float64 array in [0, 1]
    """
    tokens, offset = _header(data, 4)
    if tokens[0] != b"P6":
        raise ImageFormatError(f"not a binary PPM file (magic {tokens[0]!r})")
    width, height = _dims(tokens[1:3])
    try:
        maxval = int(tokens[3])
    except ValueError:
        raise ImageFormatError(f"bad PPM maxval {tokens[3]!r}")
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"PPM maxval must be in 1..65535, got {maxval}")

    dtype = np.dtype("u1" if maxval < 256 else ">u2")
    expected = width * height * 3
    if len(data) - offset < expected * dtype.itemsize:
        raise ImageFormatError("PPM payload is truncated")
    pixels = np.frombuffer(data, dtype=dtype, count=expected, offset=offset)
    return pixels.reshape(height, width, 3).astype(np.float64) / maxval


def write_ppm(image: np.ndarray) -> bytes:
    """
    Encodes an H x W x 3 array in [0, 1] as an 8-bit binary PPM
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"PPM holds H x W x 3 images, got {image.shape}")
    height, width = image.shape[:2]
    quantized = np.floor(np.clip(image, 0, 1) * 255 + 0.5).astype(np.uint8)
    return f"P6\n{width} {height}\n255\n".encode("ascii") + quantized.tobytes()


def read_image(path: Union[str, Path]) -> np.ndarray:
    """
    Reads a PFM or PPM file, telling them apart by their magic
    """
    data = Path(path).read_bytes()
    if data[:2] in (b"PF", b"Pf"):
        return read_pfm(data)
    if data[:2] == b"P6":
        return read_ppm(data)
    raise ImageFormatError(f"{path} is neither a PFM nor a binary PPM file")


def encode_image(path: Union[str, Path], image: np.ndarray) -> bytes:
    """
    Encodes an image in the format its path's extension names (.pfm or .ppm)
    """
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return write_pfm(image)
    if suffix == ".ppm":
        return write_ppm(image)
    raise ValueError(f"cannot tell the image format of {path}; use .pfm or .ppm")


def write_image(path: Union[str, Path], image: np.ndarray) -> None:
    atomic_write(path, encode_image(path, image))
