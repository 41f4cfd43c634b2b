from dpsim.sensor import DpPsf, PsfNormalization
from dpsim.psf.types import (
    CameraRig,
    FrustumPoint,
    GridRecord,
    GridSpec,
    LandedBundle,
    ObjectPoint,
    PsfGrid,
)
from dpsim.psf.engine import (
    bin_dp_psf,
    frustum_to_world,
    generate_grid,
    grid_points,
    normalize,
    pinhole_anchor,
    reference_points_along_x,
    trace_dp_psf,
    trace_landings,
    world_to_frustum,
)
from dpsim.psf.metrics import ncc, nsd
from dpsim.psf.coc import coc_diameter, coc_dp_psf, coc_kernels
from dpsim.psf.calibrate import (
    ScoreRow,
    SearchRanges,
    SearchResult,
    grid_search_dp_params,
    write_score_table,
)
from dpsim.psf.dppsf import dppsf_kernel_size, read_dppsf, write_dppsf
