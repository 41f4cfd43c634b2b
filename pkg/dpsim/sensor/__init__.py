from dpsim.sensor.types import (
    DEFAULT_F_OVER_PS,
    DEFAULT_H_OVER_PS,
    DEFAULT_R_OVER_PS,
    DEFAULT_W_OVER_PS,
    DpPixelGeometry,
    DpPsf,
    PixelIndex,
    PsfNormalization,
    SensorGeometry,
    SubPixel,
)
from dpsim.sensor.assign import (
    PixelHit,
    SubPixelHits,
    accumulate_psf,
    assign_direct,
    assign_refracted,
    assign_subpixel,
    assign_subpixels,
    direct_boundaries,
    locate_pixels,
    pixel_of,
    refracted_boundaries,
)
