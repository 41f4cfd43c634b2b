"""
Error types raised by dpsim.  Each branch under DpSimError corresponds to one
of the command line's exit codes
"""


class DpSimError(RuntimeError):
    """
    Base class for every error dpsim raises on purpose
    """
    exit_code = 1


class ConfigError(DpSimError):
    """
    A config, lens file, or command line argument could not be used
    """
    exit_code = 1


class LensFileError(ConfigError):
    """
    A lens prescription file failed to parse; always names the line
    """
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DataError(DpSimError):
    """
    Input data was readable as a file but unusable
    """
    exit_code = 2


class VignettedPointError(DataError):
    """
    No ray from an object point reached the sensor
    """
    def __init__(self, point):
        super().__init__(f"point fully vignetted: {point}")
        self.point = point


class ShapeMismatchError(DataError):
    """
    Two arrays that must agree in shape do not
    """
    def __init__(self, what: str, a, b):
        super().__init__(f"{what} shape mismatch: {tuple(a)} vs {tuple(b)}")


class ImageFormatError(DataError):
    """
    A PFM or PPM file is malformed
    """


class PsfFormatError(DataError):
    """
    A .dppsf file is malformed
    """


class WeightsFormatError(DataError):
    """
    A predictor weights file is malformed or does not match its use site
    """


class FeatureFormatError(DataError):
    """
    A raw feature blob is malformed
    """


class NumericalError(DpSimError):
    """
    A computation produced something that cannot be used
    """
    exit_code = 3


class OpticsError(NumericalError):
    """
    A paraxial solve has no finite answer (afocal system, pupil at infinity,
    virtual image)
    """


class DegeneratePredictionError(NumericalError):
    """
    The predictor output clamps to all zeros
    """
