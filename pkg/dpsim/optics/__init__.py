from dpsim.optics.types import (
    BundleOutcome,
    LensPrescription,
    Material,
    MissReason,
    Ray,
    SurfaceKind,
    SurfaceSpec,
    TraceOutcome,
    TraceStatus,
)
from dpsim.optics.lensfile import (
    load_builtin_lens,
    load_lens,
    parse_lens_prescription,
    serialize_lens_prescription,
)
from dpsim.optics.paraxial import (
    DEFAULT_PUPIL_SAMPLES,
    EntrancePupil,
    back_focal_distance,
    locate_entrance_pupil,
    paraxial_efl,
    paraxial_image_distance,
    refocus,
    sample_pupil,
    set_f_number,
)
from dpsim.optics.trace import (
    refract,
    refract_many,
    surface_sag,
    trace_bundle,
    trace_ray,
)
