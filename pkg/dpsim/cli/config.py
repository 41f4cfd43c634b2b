"""
The rig config: a JSON file describing the camera a command simulates
"""
from __future__ import annotations

import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from dpsim.errors import ConfigError, OpticsError
from dpsim.optics import load_lens
from dpsim.psf import CameraRig
from dpsim.sensor import DpPixelGeometry, SensorGeometry

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("lens_file", "sensor", "focus_m", "f_number", "depth_range_m", "n_rays", "ks", "seed")
OPTIONAL_KEYS = ("name", "dp_pixel")
SENSOR_KEYS = ("width_mm", "height_mm", "cols", "rows")

#: The full-frame 50 mm rig PSFs were calibrated on
STANDARD_RIG: Dict[str, Any] = {
    "name": "rf50-f4",
    "lens_file": "rf50",
    "sensor": {"width_mm": 36.0, "height_mm": 24.0, "cols": 768, "rows": 512},
    "dp_pixel": {"h_over_ps": 0.78, "f_over_ps": 1.44, "w_over_ps": 0.30, "r_over_ps": 0.50},
    "focus_m": 1.0,
    "f_number": 4.0,
    "depth_range_m": [0.5, 20.0],
    "n_rays": 4096,
    "ks": 21,
    "seed": 0,
}


class RigConfig:
    """
    Encapsulates loading, validating and writing a rig config.  lens_file is a
    path (relative to the config file) or the name of a built-in lens
    """
    def __init__(
        self,
        lens_file: str,
        sensor: SensorGeometry,
        dp_ratios: Dict[str, float],
        focus_m: float,
        f_number: float,
        depth_range_m: Tuple[float, float],
        n_rays: int,
        ks: int,
        seed: int,
        name: str = "",
        base_dir: Optional[Path] = None,
    ):
        self.lens_file = lens_file
        self.sensor = sensor
        self.dp_ratios = dp_ratios
        self.focus_m = focus_m
        self.f_number = f_number
        self.depth_range_m = depth_range_m
        self.n_rays = n_rays
        self.ks = ks
        self.seed = seed
        self.name = name
        self.base_dir = base_dir

    def __repr__(self) -> str:
        return f"RigConfig({self.name or self.lens_file}, F/{self.f_number:g} @ {self.focus_m:g} m)"

    @classmethod
    def from_dict(cls, dct: Dict[str, Any], base_dir: Optional[Path] = None) -> RigConfig:
        """
        Validates a config dict, reporting every missing key at once

        :raises ConfigError: if the dict is not a usable config
        """
        if not isinstance(dct, dict):
            raise ConfigError("rig config must be a JSON object")
        if missing := [k for k in REQUIRED_KEYS if k not in dct]:
            raise ConfigError(f"Keys {', '.join(missing)} are required")
        if unknown := set(dct.keys()) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS):
            raise ConfigError(f"Unknown config keys {', '.join(sorted(unknown))}")

        sensor_dct = dct["sensor"]
        if not isinstance(sensor_dct, dict):
            raise ConfigError("sensor must be an object")
        if missing := [k for k in SENSOR_KEYS if k not in sensor_dct]:
            raise ConfigError(f"Sensor keys {', '.join(missing)} are required")

        try:
            sensor = SensorGeometry(
                width=float(sensor_dct["width_mm"]),
                height=float(sensor_dct["height_mm"]),
                cols=int(sensor_dct["cols"]),
                rows=int(sensor_dct["rows"]),
            )
            dp_dct = dict(dct.get("dp_pixel") or {})
            ps = dp_dct.pop("ps_mm", None)
            if ps is not None and abs(float(ps) - sensor.ps) > 1e-9 * sensor.ps:
                raise ConfigError(f"dp_pixel.ps_mm {ps} does not match the sensor pitch {sensor.ps}")
            dp = DpPixelGeometry.from_dict({"ps_mm": sensor.ps, **dp_dct})

            depth_range = tuple(float(d) for d in dct["depth_range_m"])
            if len(depth_range) != 2:
                raise ConfigError(f"depth_range_m needs two values, got {len(depth_range)}")
            config = cls(
                lens_file=str(dct["lens_file"]),
                sensor=sensor,
                dp_ratios={k: v for k, v in dp.to_dict().items() if k != "ps_mm"},
                focus_m=float(dct["focus_m"]),
                f_number=float(dct["f_number"]),
                depth_range_m=depth_range,
                n_rays=int(dct["n_rays"]),
                ks=int(dct["ks"]),
                seed=int(dct["seed"]),
                name=str(dct.get("name", "")),
                base_dir=base_dir,
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid rig config: {e}")

        d_min, d_max = config.depth_range_m
        if not 0 < d_min < d_max:
            raise ConfigError(f"depth_range_m must satisfy 0 < d_min < d_max, got {list(config.depth_range_m)}")
        if config.ks < 1 or config.ks % 2 != 1:
            raise ConfigError(f"ks must be odd, got {config.ks}")
        if config.n_rays < 4:
            raise ConfigError(f"n_rays must be at least 4, got {config.n_rays}")
        return config

    def to_dict(self) -> Dict[str, Any]:
        """
        Returns this config in its JSON form
        """
        dct = {
            "lens_file": self.lens_file,
            "sensor": {
                "width_mm": self.sensor.width,
                "height_mm": self.sensor.height,
                "cols": self.sensor.cols,
                "rows": self.sensor.rows,
            },
            "dp_pixel": {"ps_mm": self.sensor.ps, **self.dp_ratios},
            "focus_m": self.focus_m,
            "f_number": self.f_number,
            "depth_range_m": list(self.depth_range_m),
            "n_rays": self.n_rays,
            "ks": self.ks,
            "seed": self.seed,
        }
        if self.name:
            dct["name"] = self.name
        return dct

    @classmethod
    def load(cls, path: Union[str, Path]) -> RigConfig:
        """
        Reads and validates a config file

        :raises ConfigError: if the file is missing, is not JSON, or is not a
                             usable config
        """
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read rig config {path}: {e.strerror}")
        try:
            dct = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}")
        return cls.from_dict(dct, base_dir=path.parent)

    @classmethod
    def standard_rig(cls) -> RigConfig:
        return cls.from_dict(copy.deepcopy(STANDARD_RIG))

    @property
    def dp(self) -> DpPixelGeometry:
        return DpPixelGeometry.from_dict({"ps_mm": self.sensor.ps, **self.dp_ratios})

    def _lens_ref(self) -> Union[str, Path]:
        if self.base_dir is not None and (self.base_dir / self.lens_file).is_file():
            return self.base_dir / self.lens_file
        return self.lens_file

    def build_rig(self, dp: Optional[DpPixelGeometry] = None) -> CameraRig:
        """
        Loads the lens and builds the rig, stopped down and focused

        :raises ConfigError: if the lens cannot be loaded or the rig is not
                             physically possible
        """
        lens = load_lens(self._lens_ref())
        try:
            rig = CameraRig.build(
                lens=lens,
                sensor=self.sensor,
                dp=dp or self.dp,
                focus_distance=self.focus_m,
                f_number=self.f_number,
                depth_range=self.depth_range_m,
                n_rays=self.n_rays,
                ks=self.ks,
            )
        except (ValueError, OpticsError) as e:
            # a rig that cannot be focused is a bad config
            raise ConfigError(f"invalid rig: {e}")
        logger.info("built %r", rig)
        return rig
