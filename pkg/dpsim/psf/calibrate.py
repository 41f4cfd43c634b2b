"""
Fitting the DP pixel structure to reference PSFs by exhaustive grid search
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
import io
import itertools
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from dpsim.psf.engine import bin_dp_psf, normalize, trace_landings
from dpsim.psf.metrics import ncc, nsd
from dpsim.psf.types import AnyPoint, CameraRig, LandedBundle
from dpsim.sensor import DpPixelGeometry, DpPsf
from dpsim.util import parallel_map

logger = logging.getLogger(__name__)


def _steps(start: float, stop: float, step: float) -> Tuple[float, ...]:
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + k * step, 6) for k in range(count))


@dataclass(frozen=True)
class SearchRanges:
    """
    Candidate values for each structural parameter, as multiples of the pixel
    pitch
    """
    h: Tuple[float, ...] = _steps(0.50, 1.20, 0.02)
    f: Tuple[float, ...] = _steps(1.00, 2.00, 0.02)
    w: Tuple[float, ...] = _steps(0.10, 0.50, 0.02)
    r: Tuple[float, ...] = (0.40, 0.45, 0.50)

    def __post_init__(self):
        for name in ("h", "f", "w", "r"):
            if not getattr(self, name):
                raise ValueError(f"no candidate values for {name}")

    def __len__(self) -> int:
        return len(self.h) * len(self.f) * len(self.w) * len(self.r)

    def candidates(self) -> Iterable[Tuple[float, float, float, float]]:
        """
        Every (h, f, w, r) combination, h varying slowest
        """
        return itertools.product(self.h, self.f, self.w, self.r)


@dataclass(frozen=True)
class ScoreRow:
    """
    One searched candidate.  ncc and nsd are None if the candidate was not a
    physically valid pixel (f <= h, or w or r over half the pitch)
    """
    h: float
    f: float
    w: float
    r: float
    ncc: Optional[float]
    nsd: Optional[float]

    @property
    def valid(self) -> bool:
        return self.ncc is not None


@dataclass
class SearchResult:
    best: DpPixelGeometry
    best_row: ScoreRow
    table: List[ScoreRow]


def _score(
    ps: float, candidate: Tuple[float, float, float, float],
    bundles: Sequence[LandedBundle], targets: Sequence[DpPsf], ks: int,
) -> ScoreRow:
    h, f, w, r = candidate
    try:
        dp = DpPixelGeometry.from_ratios(ps, h=h, f=f, w=w, r=r)
    except ValueError:
        return ScoreRow(h, f, w, r, None, None)

    nccs, nsds = [], []
    for bundle, target in zip(bundles, targets):
        psf = bin_dp_psf(dp, bundle, ks)
        if psf.landed_count == 0:
            nccs.append(0.0)
            nsds.append(np.inf)
            continue
        psf = normalize(psf, "sum")
        nccs.append(ncc(psf, target))
        nsds.append(nsd(psf, target))
    return ScoreRow(h, f, w, r, float(np.mean(nccs)), float(np.mean(nsds)))


def grid_search_dp_params(
    rig: CameraRig,
    reference: Sequence[Tuple[AnyPoint, DpPsf]],
    ranges: Optional[SearchRanges] = None,
) -> SearchResult:
    """
    Scores every candidate DP pixel structure against the reference PSFs and
    returns the best one with the full score table.

    The lens is traced once per reference point; each candidate only re-bins
    those rays.  Candidates are ranked by mean NCC, then by lower mean NSD,
    then by search order.
    """
    if not reference:
        raise ValueError("grid search needs at least one reference PSF")
    ranges = ranges or SearchRanges()

    ks = reference[0][1].ks
    bundles = [trace_landings(rig, point) for point, _ in reference]
    targets = [normalize(psf, "sum") for _, psf in reference]
    logger.info("searching %d DP pixel candidates against %d references", len(ranges), len(reference))

    candidates = list(ranges.candidates())
    table = parallel_map(lambda c: _score(rig.dp.ps, c, bundles, targets, ks), candidates)

    best_row = None
    for row in table:
        if not row.valid:
            continue
        if best_row is None or row.ncc > best_row.ncc or (row.ncc == best_row.ncc and row.nsd < best_row.nsd):
            best_row = row

    if best_row is None:
        raise ValueError("every DP pixel candidate was invalid (f <= h or oversized w, r)")

    skipped = sum(1 for row in table if not row.valid)
    if skipped:
        logger.info("skipped %d invalid candidates", skipped)

    best = DpPixelGeometry.from_ratios(rig.dp.ps, h=best_row.h, f=best_row.f, w=best_row.w, r=best_row.r)
    logger.info("best DP pixel %r: NCC %.6f, NSD %.6f", best, best_row.ncc, best_row.nsd)
    return SearchResult(best=best, best_row=best_row, table=table)


def write_score_table(rows: Iterable[ScoreRow]) -> str:
    """
    Returns the score table as CSV; invalid candidates have empty metrics
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["h", "f", "w", "r", "ncc", "nsd", "valid"])
    for row in rows:
        writer.writerow([
            f"{row.h:.2f}", f"{row.f:.2f}", f"{row.w:.2f}", f"{row.r:.2f}",
            "" if row.ncc is None else repr(row.ncc),
            "" if row.nsd is None else repr(row.nsd),
            int(row.valid),
        ])
    return out.getvalue()
