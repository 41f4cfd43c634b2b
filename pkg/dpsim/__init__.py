from dpsim.errors import (
    ConfigError,
    DataError,
    DegeneratePredictionError,
    DpSimError,
    NumericalError,
    OpticsError,
    VignettedPointError,
)
from dpsim.optics import LensPrescription, load_builtin_lens, load_lens
from dpsim.sensor import DpPixelGeometry, DpPsf, SensorGeometry, SubPixel
from dpsim.psf import (
    CameraRig,
    FrustumPoint,
    GridSpec,
    ObjectPoint,
    PsfGrid,
    generate_grid,
    grid_search_dp_params,
    trace_dp_psf,
)
from dpsim.predictor import MlpWeights, PsfPredictor, load_weights, save_weights, train
from dpsim.render import DpImagePair, PsfMap, RgbdFrame, render_dp
from dpsim.dfdp import dp_cost_volume
