"""
Runs one pipeline step per invocation on the terminal
"""
from __future__ import annotations

from argparse import ArgumentParser
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from rich.console import Console

from dpsim.cli.config import RigConfig
from dpsim.cli.models import CliPsf, CliScoreTable
from dpsim.dfdp import dp_cost_volume, read_feature_blob, write_feature_blob
from dpsim.errors import ConfigError, DataError, DpSimError, ImageFormatError, ShapeMismatchError
from dpsim.predictor import (
    DEFAULT_HIDDEN,
    GridTargets,
    PsfPredictor,
    TrainConfig,
    evaluate_predictor,
    init_mlp,
    load_weights,
    save_weights,
    train,
)
from dpsim.psf import (
    FrustumPoint,
    GridRecord,
    GridSpec,
    PsfGrid,
    SearchRanges,
    generate_grid,
    grid_search_dp_params,
    ncc,
    nsd,
    read_dppsf,
    reference_points_along_x,
    trace_dp_psf,
    write_dppsf,
    write_score_table,
)
from dpsim.render import (
    CocSource,
    RgbdFrame,
    TracerSource,
    encode_image,
    psnr,
    read_image,
    render_with_source,
    ssim,
)
from dpsim.util import atomic_write, setup_logging

logger = logging.getLogger(__name__)


class CliParser(ArgumentParser):
    """
    An ArgumentParser that reports usage errors as ConfigError instead of
    exiting, so every failure goes through the same exit-code mapping
    """
    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _floats(text: str, count: Optional[int], what: str) -> Tuple[float, ...]:
    try:
        values = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated numbers, got {text!r}")
    if count is not None and len(values) != count:
        raise ConfigError(f"{what} needs {count} values, got {len(values)}")
    return values


def _candidates(text: str, what: str) -> Tuple[float, ...]:
    """
    Parses a candidate list: "start:stop:step" or comma-separated values
    """
    if ":" not in text:
        return _floats(text, None, what)
    parts = _floats(text.replace(":", ","), 3, what)
    start, stop, step = parts
    if not step > 0 or stop < start:
        raise ConfigError(f"{what} range {text!r} is empty")
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + k * step, 6) for k in range(count))


def _output(path: Optional[str]) -> Optional[Path]:
    """
    Checks that an output path can be written to before any work starts
    """
    if path is None:
        return None
    out = Path(path)
    if not out.parent.is_dir():
        raise ConfigError(f"output directory {out.parent} does not exist")
    return out


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}")


def _image(path: str) -> np.ndarray:
    try:
        return read_image(path)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}")


def _image_output(path: str) -> Path:
    out = _output(path)
    if out.suffix.lower() not in (".pfm", ".ppm"):
        raise ConfigError(f"cannot tell the image format of {path}; use .pfm or .ppm")
    return out


class DpSimCLI():
    def __init__(self, out: Optional[Console] = None, err: Optional[Console] = None):
        self._out = out or Console()
        self._err = err or Console(stderr=True)

        self._actions = [
            "trace-psf",
            "gen-grid",
            "train-predictor",
            "render",
            "compare-psf",
            "compare-img",
            "calibrate-dp",
            "eval-predictor",
            "cost-volume",
        ]

    def run(self, args: List[str]) -> int:
        """
        Handles a CLI call and returns the process exit code
        """
        parser = ArgumentParser("dpsim", add_help=False)
        parser.add_argument("action", nargs="?", help=f"One of {', '.join(self._actions)}")
        parsed, remaining = parser.parse_known_args(args)

        if parsed.action not in self._actions:
            parser.print_help()
            return 1

        try:
            getattr(self, parsed.action.replace("-", "_"))(remaining)
        except DpSimError as e:
            self._err.print(f"error: {e}", style="red", markup=False, highlight=False)
            return e.exit_code
        except ValueError as e:
            self._err.print(f"error: {e}", style="red", markup=False, highlight=False)
            return 1
        return 0

    def _parser(self, action: str, rig: bool = True) -> CliParser:
        parser = CliParser(f"dpsim {action}")
        parser.add_argument("--verbose", "-v", action="count", default=0, help="Log more (repeat for debug)")
        if rig:
            parser.add_argument("--rig", required=True, help="Rig config JSON")
        return parser

    def _parse(self, parser: CliParser, args: List[str]):
        parsed = parser.parse_args(args)
        setup_logging(parsed.verbose)
        return parsed

    def _emit(self, dct: Dict[str, Any]) -> None:
        self._out.print_json(data=dct)

    def trace_psf(self, args: List[str]) -> None:
        """
        Ray-traces the DP PSF of one frustum point
        """
        parser = self._parser("trace-psf")
        parser.add_argument("--point", required=True, help="u,v,depth_m")
        parser.add_argument("--out", help="Write the PSF as a one-record .dppsf")
        parser.add_argument("--show", action="store_true", help="Print the PSF as a heat map")
        parsed = self._parse(parser, args)

        out = _output(parsed.out)
        point = FrustumPoint(*_floats(parsed.point, 3, "--point"))
        rig = RigConfig.load(parsed.rig).build_rig()
        psf = trace_dp_psf(rig, point)

        if out is not None:
            atomic_write(out, write_dppsf([GridRecord(point, psf)], rig.ks))

        disparity = None
        if psf.left_total > 0 and psf.right_total > 0:
            disparity = psf.disparity()
        if parsed.show:
            self._err.print(CliPsf(psf).render())
        self._emit({
            "point": list(point),
            "anchor": [int(psf.anchor.i), int(psf.anchor.j)],
            "n_rays": psf.n_rays,
            "left": int(psf.left_total),
            "right": int(psf.right_total),
            "missed": int(psf.missed_count),
            "missed_fraction": int(psf.missed_count) / psf.n_rays,
            "window_misses": int(psf.window_misses),
            "disparity_px": disparity,
        })

    def gen_grid(self, args: List[str]) -> None:
        """
        Ray-traces a grid of PSFs over the frustum
        """
        parser = self._parser("gen-grid")
        layout = parser.add_mutually_exclusive_group(required=True)
        layout.add_argument("--lattice", help="n_u,n_v,n_depth")
        layout.add_argument("--count", type=int, help="Number of seeded random points")
        parser.add_argument("--seed", type=int, help="Overrides the rig config's seed")
        parser.add_argument("--out", required=True, help="Output .dppsf")
        parsed = self._parse(parser, args)

        out = _output(parsed.out)
        config = RigConfig.load(parsed.rig)
        seed = config.seed if parsed.seed is None else parsed.seed
        if parsed.lattice:
            lattice = tuple(int(n) for n in _floats(parsed.lattice, 3, "--lattice"))
            spec = GridSpec(lattice=lattice, seed=seed)
        else:
            spec = GridSpec(count=parsed.count, seed=seed)

        rig = config.build_rig()
        grid = generate_grid(rig, spec)
        atomic_write(out, write_dppsf(grid.records, rig.ks))

        traced = grid.traced
        self._emit({
            "records": len(grid),
            "skipped": grid.skipped_count,
            "ks": grid.ks,
            "max_window_miss_fraction": max(
                (r.psf.window_misses / r.psf.n_rays for r in traced), default=0.0,
            ),
        })

    def _load_grid(self, path: str, ks: int) -> PsfGrid:
        records = read_dppsf(_read(path))
        grid = PsfGrid(records=records, ks=ks)
        for record in grid.traced:
            if record.psf.ks != ks:
                raise ShapeMismatchError("grid kernel", record.psf.left.shape, (ks, ks))
        return grid

    def _load_predictor(self, path: str, rig) -> PsfPredictor:
        return PsfPredictor(load_weights(_read(path)), rig)

    def train_predictor(self, args: List[str]) -> None:
        """
        Trains the PSF predictor on a ray-traced grid
        """
        parser = self._parser("train-predictor")
        parser.add_argument("--grid", required=True, help="Training .dppsf")
        parser.add_argument("--out", required=True, help="Output weights file")
        parser.add_argument("--loss", help="Write the loss trace as CSV")
        parser.add_argument("--iterations", type=int, default=100_000)
        parser.add_argument("--batch", type=int, default=128)
        parser.add_argument("--lr-max", type=float, default=1e-4)
        parser.add_argument("--lr-min", type=float, default=1e-6)
        parser.add_argument("--hidden", default=",".join(str(n) for n in DEFAULT_HIDDEN),
                            help="Hidden layer widths, comma-separated")
        parser.add_argument("--seed", type=int, help="Overrides the rig config's seed")
        parsed = self._parse(parser, args)

        out, loss_out = _output(parsed.out), _output(parsed.loss)
        config = RigConfig.load(parsed.rig)
        seed = config.seed if parsed.seed is None else parsed.seed
        hidden = tuple(int(n) for n in _floats(parsed.hidden, None, "--hidden"))
        rig = config.build_rig()
        grid = self._load_grid(parsed.grid, rig.ks)

        cfg = TrainConfig(
            source=GridTargets(grid, rig),
            iterations=parsed.iterations,
            batch=parsed.batch,
            lr_max=parsed.lr_max,
            lr_min=parsed.lr_min,
            seed=seed,
            log_every=max(1, parsed.iterations // 100),
        )
        result = train(init_mlp(rig.ks, seed, hidden=hidden), cfg)

        atomic_write(out, save_weights(result.weights))
        if loss_out is not None:
            lines = ["iteration,loss"] + [f"{k},{loss!r}" for k, loss in enumerate(result.losses)]
            atomic_write(loss_out, "\n".join(lines) + "\n")

        tail = max(1, len(result.losses) // 100)
        self._emit({
            "iterations": len(result.losses),
            "first_loss": float(np.mean(result.losses[:tail])),
            "final_loss": float(np.mean(result.losses[-tail:])),
        })

    def render(self, args: List[str]) -> None:
        """
        Renders a DP image pair from an all-in-focus image and a depth map
        """
        parser = self._parser("render")
        parser.add_argument("--aif", required=True, help="All-in-focus image (.pfm or .ppm)")
        parser.add_argument("--depth", required=True, help="Depth map in m (single-channel .pfm)")
        parser.add_argument("--weights", help="Predictor weights")
        parser.add_argument("--baseline", choices=["coc", "trace"],
                            help="Use the CoC baseline or the ray tracer instead of the predictor")
        parser.add_argument("--left", required=True, help="Output left image (.pfm or .ppm)")
        parser.add_argument("--right", required=True, help="Output right image (.pfm or .ppm)")
        parsed = self._parse(parser, args)

        left_out, right_out = _image_output(parsed.left), _image_output(parsed.right)
        if parsed.baseline is None and not parsed.weights:
            raise ConfigError("render needs --weights unless a --baseline is given")

        rgb = _image(parsed.aif)
        if rgb.ndim != 3:
            raise ImageFormatError(f"{parsed.aif} is not a color image")
        depth = _image(parsed.depth)
        if depth.ndim != 2:
            raise ImageFormatError(f"{parsed.depth} is not a single-channel depth map")

        rig = RigConfig.load(parsed.rig).build_rig()
        frame = RgbdFrame.ingest(rgb, depth, rig.depth_range)
        if parsed.baseline == "coc":
            source = CocSource(rig)
        elif parsed.baseline == "trace":
            source = TracerSource(rig)
        else:
            source = self._load_predictor(parsed.weights, rig)

        pair = render_with_source(frame, source)
        atomic_write(left_out, encode_image(left_out, pair.left))
        atomic_write(right_out, encode_image(right_out, pair.right))
        self._emit({
            "height": frame.shape[0],
            "width": frame.shape[1],
            "clamped_depths": frame.clamped_count,
            "source": parsed.baseline or "predictor",
        })

    def compare_psf(self, args: List[str]) -> None:
        """
        Scores two .dppsf files against each other, record by record
        """
        parser = self._parser("compare-psf", rig=False)
        parser.add_argument("a")
        parser.add_argument("b")
        parsed = self._parse(parser, args)

        a, b = read_dppsf(_read(parsed.a)), read_dppsf(_read(parsed.b))
        if len(a) != len(b):
            raise DataError(f"{parsed.a} has {len(a)} records but {parsed.b} has {len(b)}")

        pairs = [(ra.psf, rb.psf) for ra, rb in zip(a, b) if not (ra.skipped or rb.skipped)]
        if not pairs:
            raise DataError("no record is traced in both files")
        nccs = [ncc(pa, pb) for pa, pb in pairs]
        nsds = [nsd(pa, pb) for pa, pb in pairs]
        self._emit({"count": len(pairs), "ncc": float(np.mean(nccs)), "nsd": float(np.mean(nsds))})

    def compare_img(self, args: List[str]) -> None:
        """
        Prints PSNR and SSIM between two images
        """
        parser = self._parser("compare-img", rig=False)
        parser.add_argument("a")
        parser.add_argument("b")
        parsed = self._parse(parser, args)

        a, b = _image(parsed.a), _image(parsed.b)
        self._emit({"psnr": psnr(a, b), "ssim": ssim(a, b)})

    def calibrate_dp(self, args: List[str]) -> None:
        """
        Grid-searches the DP pixel structure that best reproduces reference PSFs
        """
        parser = self._parser("calibrate-dp")
        parser.add_argument("--reference", help="Reference .dppsf; traced with the rig's own DP pixel if omitted")
        parser.add_argument("--depth", type=float, default=0.6, help="Depth (m) of generated reference points")
        parser.add_argument("--count", type=int, default=5, help="Number of generated reference points")
        parser.add_argument("--h", help="h/ps candidates, start:stop:step or a comma list")
        parser.add_argument("--f", help="f/ps candidates")
        parser.add_argument("--w", help="w/ps candidates")
        parser.add_argument("--r", help="r/ps candidates")
        parser.add_argument("--scores", required=True, help="Output score table CSV")
        parser.add_argument("--out", help="Write the best DP pixel as JSON")
        parser.add_argument("--show", action="store_true", help="Print the best candidates as a table")
        parsed = self._parse(parser, args)

        scores_out, best_out = _output(parsed.scores), _output(parsed.out)
        defaults = SearchRanges()
        ranges = SearchRanges(
            h=_candidates(parsed.h, "--h") if parsed.h else defaults.h,
            f=_candidates(parsed.f, "--f") if parsed.f else defaults.f,
            w=_candidates(parsed.w, "--w") if parsed.w else defaults.w,
            r=_candidates(parsed.r, "--r") if parsed.r else defaults.r,
        )

        rig = RigConfig.load(parsed.rig).build_rig()
        if parsed.reference:
            reference = [(r.point, r.psf) for r in read_dppsf(_read(parsed.reference)) if not r.skipped]
            if not reference:
                raise DataError(f"{parsed.reference} holds no traced PSFs")
        else:
            points = reference_points_along_x(rig, parsed.depth, parsed.count)
            reference = [(p, trace_dp_psf(rig, p)) for p in points]

        result = grid_search_dp_params(rig, reference, ranges)
        atomic_write(scores_out, write_score_table(result.table))
        best = {
            **result.best.to_dict(),
            "ncc": result.best_row.ncc,
            "nsd": result.best_row.nsd,
        }
        if best_out is not None:
            atomic_write(best_out, json.dumps(best, indent=2) + "\n")
        if parsed.show:
            self._err.print(CliScoreTable(result.table).render())
        self._emit(best)

    def eval_predictor(self, args: List[str]) -> None:
        """
        Measures predictor error against held-out ray-traced PSFs
        """
        parser = self._parser("eval-predictor")
        parser.add_argument("--weights", required=True)
        parser.add_argument("--grid", required=True, help="Held-out .dppsf")
        parser.add_argument("--limit", type=int, help="Use at most this many records")
        parsed = self._parse(parser, args)

        rig = RigConfig.load(parsed.rig).build_rig()
        predictor = self._load_predictor(parsed.weights, rig)
        grid = self._load_grid(parsed.grid, rig.ks)
        self._emit(evaluate_predictor(predictor, grid, limit=parsed.limit).to_dict())

    def cost_volume(self, args: List[str]) -> None:
        """
        Builds the bidirectional DP cost volume of two feature blobs
        """
        parser = self._parser("cost-volume", rig=False)
        parser.add_argument("--left", required=True, help="Left feature blob")
        parser.add_argument("--right", required=True, help="Right feature blob")
        parser.add_argument("--d-max", type=int, required=True, help="Number of displacements")
        parser.add_argument("--out", required=True, help="Output blob, (B, 2C*d_max, H, W)")
        parsed = self._parse(parser, args)

        out = _output(parsed.out)
        x = read_feature_blob(_read(parsed.left))
        y = read_feature_blob(_read(parsed.right))
        volume = dp_cost_volume(x, y, parsed.d_max)
        atomic_write(out, write_feature_blob(volume))
        self._emit({"shape": list(volume.shape)})

