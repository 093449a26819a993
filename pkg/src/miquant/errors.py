"""Exception types shared across the toolkit.

Errors are grouped by how the CLI maps them to exit codes: configuration
problems, data problems, and numeric failures.
"""


class MiquantError(Exception):
    """Base class for all toolkit errors."""


# --- configuration / usage ---

class ConfigError(MiquantError):
    """Invalid run configuration or command-line usage."""


# --- data / format ---

class DataError(MiquantError):
    """Base for malformed or inconsistent input data."""


class FormatError(DataError):
    """Volume file header or payload violates the on-disk format."""


class UnsupportedElementType(FormatError):
    """Volume header declares an element type the toolkit does not read."""


class ManifestError(DataError):
    """Case manifest is missing files or references inconsistent grids."""


class IoError(DataError):
    """Filesystem failure while reading or writing an artifact."""


class SpacingError(DataError):
    """Reslicing would require through-plane resampling, which is disabled."""


class AlignmentError(DataError):
    """Two grids that must share dims and spacing do not."""


class EmptyMask(DataError):
    """An operation requires a non-empty mask."""


class EmptyRegion(DataError):
    """A reference region (myocardium, blood pool, remote) is empty."""


class NoGroundTruth(DataError):
    """A training operation requires ground-truth scar masks."""


class SpecError(DataError):
    """Phantom specification violates a geometric or intensity invariant."""


class LengthMismatch(DataError):
    """Paired series have different lengths."""


# --- numeric ---

class NumericError(MiquantError):
    """Base for degenerate or diverging numerical computations."""


class DegenerateHistogram(NumericError):
    """Histogram has fewer than two occupied intensity levels."""


class DegenerateRange(NumericError):
    """Normalization reference values coincide; no affine map exists."""


class DegenerateData(NumericError):
    """Input carries no variance (or too few samples) to fit a model."""


class ShapeError(NumericError):
    """Tensor shape incompatible with a network layer."""


class DivergenceError(NumericError):
    """Training loss became non-finite."""


class SingleClassError(NumericError):
    """A binary fit or score received samples of only one class."""


class EmptyClassError(NumericError):
    """Class balancing received an empty class."""


class ZeroVariance(NumericError):
    """A statistic is undefined because a series has zero variance."""


class EmptyDenominator(NumericError):
    """A ratio metric has an empty denominator set."""


class DivisionByZero(EmptyDenominator):
    """Percentage requested against an empty myocardium."""


class Unachievable(NumericError):
    """No operating point reaches the requested sensitivity."""
