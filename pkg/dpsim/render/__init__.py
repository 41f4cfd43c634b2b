from dpsim.render.types import DpImagePair, PsfMap, RgbdFrame
from dpsim.render.render import (
    CocSource,
    PsfSource,
    TracerSource,
    build_psf_map,
    pixel_coordinates,
    render_dp,
    render_with_source,
    stack_dp,
)
from dpsim.render.metrics import psnr, ssim
from dpsim.render.imageio import (
    encode_image,
    read_image,
    read_pfm,
    read_ppm,
    write_image,
    write_pfm,
    write_ppm,
)
