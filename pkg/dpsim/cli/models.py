from typing import Sequence

import numpy as np
from rich.table import Table
from rich.text import Text

from dpsim.psf import DpPsf, ScoreRow

#: Shades from empty to full, for heat maps
SHADES = " .:-=+*#%@"


def shade(value: float) -> str:
    """
    Returns the heat map character for a value in [0, 1]
    """
    k = int(round(min(max(value, 0.0), 1.0) * (len(SHADES) - 1)))
    return SHADES[k]


class CliPsf:
    def __init__(self, psf: DpPsf):
        self.psf = psf

    def render(self) -> Table:
        """
        Returns the left and right kernels side by side as a rich table of
        shaded characters, both scaled by their joint maximum
        """
        left = np.asarray(self.psf.left, dtype=float)
        right = np.asarray(self.psf.right, dtype=float)
        peak = max(left.max(), right.max()) or 1.0

        table = Table(box=None, show_header=True, padding=(0, 2))
        table.add_column("[u]left[/u]")
        table.add_column("[u]right[/u]")
        for row_l, row_r in zip(left, right):
            table.add_row(
                Text("".join(shade(v / peak) * 2 for v in row_l), style="yellow"),
                Text("".join(shade(v / peak) * 2 for v in row_r), style="cyan"),
            )
        table.caption = (
            f"anchor ({self.psf.anchor.i}, {self.psf.anchor.j})  "
            f"L {self.psf.left_total:.4g}  R {self.psf.right_total:.4g}  missed {self.psf.missed_count}"
        )
        return table


class CliScoreTable:
    def __init__(self, rows: Sequence[ScoreRow], top: int = 10):
        self.rows = rows
        self.top = top

    def render(self) -> Table:
        """
        Returns the best-scoring candidates as a rich table, best first
        """
        valid = [r for r in self.rows if r.valid]
        ranked = sorted(valid, key=lambda r: (-r.ncc, r.nsd))[: self.top]

        table = Table(title=f"top {len(ranked)} of {len(self.rows)} DP pixel candidates")
        for name in ("h/ps", "f/ps", "w/ps", "r/ps"):
            table.add_column(name, justify="right")
        table.add_column("NCC", justify="right", style="green")
        table.add_column("NSD", justify="right", style="red")
        for r in ranked:
            table.add_row(
                f"{r.h:.2f}", f"{r.f:.2f}", f"{r.w:.2f}", f"{r.r:.2f}", f"{r.ncc:.6f}", f"{r.nsd:.6f}",
            )
        return table
