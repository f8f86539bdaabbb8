"""Exception types shared across the package."""


class VidenoiseError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(VidenoiseError, ValueError):
    """Operands have incompatible or unexpected dimensions."""


class NotPositiveDefiniteError(VidenoiseError):
    """A matrix required to be positive-definite is not."""


class DegenerateAccumulatorError(VidenoiseError):
    """Learner accumulators cannot support a transform update yet."""


class SingularMatrixError(VidenoiseError):
    """Matrix is singular or beyond the configured condition cap."""


class SvdConvergenceError(VidenoiseError):
    """The SVD iteration failed to converge."""


class CoverageError(VidenoiseError):
    """A pixel of the frame being emitted received no patch deposits."""


class VideoFormatError(VidenoiseError, ValueError):
    """A video file could not be parsed or uses an unsupported layout."""


class ConfigError(VidenoiseError, ValueError):
    """Invalid denoiser configuration."""
