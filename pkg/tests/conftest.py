import copy
from dataclasses import replace
import json

import pytest

from dpsim.cli.config import STANDARD_RIG, RigConfig
from dpsim.optics import load_builtin_lens


@pytest.fixture(scope="session")
def rf50():
    return load_builtin_lens("rf50")


@pytest.fixture(scope="session")
def rf35():
    return load_builtin_lens("rf35")


@pytest.fixture(scope="session")
def standard_rig():
    """
    RF50 at F/4 focused at 1 m on a 768x512 full-frame sensor, 4096 rays per
    point, ks=21
    """
    return RigConfig.standard_rig().build_rig()


@pytest.fixture(scope="session")
def small_rig(standard_rig):
    """
    The standard rig with 1024 rays per point, for tests that trace many points
    """
    return replace(standard_rig, n_rays=1024)


@pytest.fixture(scope="session")
def tiny_rig(standard_rig):
    """
    256 rays and 5x5 kernels, for tests that only need the plumbing
    """
    return replace(standard_rig, n_rays=256, ks=5)


@pytest.fixture
def rig_config():
    return copy.deepcopy(STANDARD_RIG)


@pytest.fixture
def coarse_rig_file(tmp_path):
    """
    A rig config with 96x64 pixels, 256 rays and ks=5, written to disk; fast
    enough to run whole CLI pipelines on
    """
    dct = copy.deepcopy(STANDARD_RIG)
    dct["name"] = "coarse"
    dct["sensor"] = {"width_mm": 36.0, "height_mm": 24.0, "cols": 96, "rows": 64}
    dct["n_rays"] = 256
    dct["ks"] = 5
    path = tmp_path / "coarse.json"
    path.write_text(json.dumps(dct))
    return path
