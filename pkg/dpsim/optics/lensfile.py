"""
Reading and writing lens prescription files.

One surface per line, whitespace separated::

    index kind radius_mm thickness_mm n/V diameter_mm [conic a4 a6 a8 a10 a12]

``kind`` is one of S, A, STOP or SENSOR; ``-`` stands for "none" in the radius,
thickness (sensor only) and material columns.  Two directive lines carry the
prescription's metadata: ``NAME <text>`` and ``FNUMBER <value>``.  Anything
after a ``#`` is a comment.
"""
from __future__ import annotations

from dataclasses import replace
import logging
from pathlib import Path
from typing import List, Optional, Union

from dpsim.errors import ConfigError, LensFileError
from dpsim.optics.types import (
    ZERO_ASPHERE,
    LensPrescription,
    Material,
    SurfaceKind,
    SurfaceSpec,
)

logger = logging.getLogger(__name__)

#: Directory holding the prescriptions that ship with dpsim
BUILTIN_LENS_DIR = Path(__file__).parent / "lenses"

NONE_TOKEN = "-"


def _number(token: str, line_no: int, column: str) -> float:
    """
    Parses one numeric column, turning failures into errors naming the line
    """
    try:
        return float(token)
    except ValueError:
        raise LensFileError(line_no, f"{column} must be numeric, got {token!r}")


def _parse_surface(tokens: List[str], line_no: int) -> SurfaceSpec:
    """
    Builds a SurfaceSpec out of the columns of one surface line
    """
    if len(tokens) < 6:
        raise LensFileError(line_no, f"expected at least 6 columns, got {len(tokens)}")
    if len(tokens) > 12:
        raise LensFileError(line_no, f"expected at most 12 columns, got {len(tokens)}")

    try:
        int(tokens[0])
    except ValueError:
        raise LensFileError(line_no, f"surface index must be an integer, got {tokens[0]!r}")

    try:
        kind = SurfaceKind.from_token(tokens[1])
    except ValueError as e:
        raise LensFileError(line_no, str(e))

    radius = 0.0 if tokens[2] == NONE_TOKEN else _number(tokens[2], line_no, "radius")

    if tokens[3] == NONE_TOKEN:
        if kind != SurfaceKind.sensor:
            raise LensFileError(line_no, "only the sensor may omit its thickness")
        thickness = 0.0
    else:
        thickness = _number(tokens[3], line_no, "thickness")
    if thickness < 0:
        raise LensFileError(line_no, f"negative thickness {thickness}")

    material = None
    if tokens[4] != NONE_TOKEN:
        parts = tokens[4].split("/")
        if len(parts) != 2:
            raise LensFileError(line_no, f"material must be n/V or -, got {tokens[4]!r}")
        n = _number(parts[0], line_no, "refractive index")
        v = _number(parts[1], line_no, "Abbe number")
        try:
            material = Material(n, v)
        except ValueError as e:
            raise LensFileError(line_no, str(e))

    diameter = _number(tokens[5], line_no, "diameter")

    extra = [_number(t, line_no, "conic/asphere term") for t in tokens[6:]]
    extra += [0.0] * (6 - len(extra))
    conic = extra[0]
    coeffs = tuple(extra[1:])

    try:
        return SurfaceSpec(
            kind=kind,
            radius=radius,
            thickness=thickness,
            material=material,
            semi_diameter=diameter / 2,
            conic=conic,
            asphere_coeffs=coeffs,
        )
    except ValueError as e:
        raise LensFileError(line_no, str(e))


def parse_lens_prescription(text: str) -> LensPrescription:
    """
    Parses the text of a lens file into a LensPrescription.  If the file has no
    FNUMBER directive, the native F-number is derived paraxially from the stop
    """
    surfaces: List[SurfaceSpec] = []
    name = ""
    f_number: Optional[float] = None
    last_line = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        last_line = line_no
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue

        tokens = line.split()
        keyword = tokens[0].upper()
        if keyword == "NAME":
            name = line[len(tokens[0]):].strip()
            continue
        if keyword == "FNUMBER":
            if len(tokens) != 2:
                raise LensFileError(line_no, "FNUMBER takes exactly one value")
            f_number = _number(tokens[1], line_no, "FNUMBER")
            if not f_number > 0:
                raise LensFileError(line_no, f"FNUMBER must be > 0, got {f_number}")
            continue

        surfaces.append(_parse_surface(tokens, line_no))

    if not surfaces:
        raise LensFileError(max(last_line, 1), "no surfaces")

    kinds = [s.kind for s in surfaces]
    if SurfaceKind.stop not in kinds:
        raise LensFileError(last_line, "missing stop surface")
    if kinds.count(SurfaceKind.stop) > 1:
        raise LensFileError(last_line, "more than one stop surface")
    if SurfaceKind.sensor not in kinds:
        raise LensFileError(last_line, "missing sensor surface")
    if kinds.count(SurfaceKind.sensor) > 1 or kinds[-1] != SurfaceKind.sensor:
        raise LensFileError(last_line, "the sensor must be the single, last surface")

    lens = LensPrescription(
        surfaces=tuple(surfaces),
        stop_index=kinds.index(SurfaceKind.stop),
        native_f_number=f_number if f_number is not None else 1.0,
        name=name,
    )

    if f_number is None:
        # no directive; what the stop admits at infinity focus is the design aperture
        from dpsim.optics.paraxial import locate_entrance_pupil, paraxial_efl

        _, pupil_diameter = locate_entrance_pupil(lens)
        lens = replace(lens, native_f_number=paraxial_efl(lens) / pupil_diameter)
        logger.debug("derived native F-number %.4f for %s", lens.native_f_number, name)

    return lens


def _fmt(value: float) -> str:
    """
    Shortest text that parses back to exactly the same float
    """
    return repr(float(value))


def serialize_lens_prescription(lens: LensPrescription) -> str:
    """
    Returns lens file text for the given prescription; parsing the result gives
    back an equal LensPrescription
    """
    lines = []
    if lens.name:
        lines.append(f"NAME {lens.name}")
    lines.append(f"FNUMBER {_fmt(lens.native_f_number)}")
    lines.append("# index kind radius thickness n/V diameter conic a4 a6 a8 a10 a12")

    for i, s in enumerate(lens.surfaces, start=1):
        radius = NONE_TOKEN if s.radius == 0 else _fmt(s.radius)
        material = NONE_TOKEN if s.material is None else f"{_fmt(s.material.n)}/{_fmt(s.material.V)}"
        cols = [
            str(i),
            s.kind.value,
            radius,
            _fmt(s.thickness),
            material,
            _fmt(s.semi_diameter * 2),
        ]
        if s.conic != 0 or s.asphere_coeffs != ZERO_ASPHERE:
            cols += [_fmt(s.conic)] + [_fmt(a) for a in s.asphere_coeffs]
        lines.append(" ".join(cols))

    return "\n".join(lines) + "\n"


def load_lens(path_or_name: Union[str, Path]) -> LensPrescription:
    """
    Loads a lens file from disk, falling back to the prescriptions that ship
    with dpsim when given a bare name like "rf50" or "rf35.lens"
    """
    path = Path(path_or_name)
    if not path.is_file():
        name = path.name if path.suffix == ".lens" else f"{path.name}.lens"
        builtin = BUILTIN_LENS_DIR / name
        if path.parent != Path(".") or not builtin.is_file():
            raise ConfigError(f"lens file {path_or_name} not found")
        path = builtin

    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError(f"lens file {path} is not UTF-8: {e}")

    return parse_lens_prescription(text)


def load_builtin_lens(name: str) -> LensPrescription:
    """
    Loads one of the prescriptions shipped with dpsim ("rf50" or "rf35")
    """
    stem = name[:-5] if name.endswith(".lens") else name
    path = BUILTIN_LENS_DIR / f"{stem}.lens"
    if not path.is_file():
        raise ConfigError(f"no builtin lens {name}")
    return parse_lens_prescription(path.read_text(encoding="utf-8"))
