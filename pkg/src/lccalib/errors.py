"""Exception hierarchy for the calibration toolkit.

Every failure mode raised by the pipeline is a subclass of CalibError so
callers (and the CLI) can distinguish pipeline failures from programming
errors.
"""


class CalibError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CalibError):
    """A config / JSON file could not be parsed."""


class ValidationError(CalibError):
    """A parsed value violates an invariant; message names the field."""


class FormatError(CalibError):
    """A binary/text container (PCD, PPM) is malformed."""


class UnsupportedError(CalibError):
    """The file is well-formed but uses features we do not support."""


class EmptyRoiError(CalibError):
    """No points survived the pass-through filter."""


class DegenerateInputError(CalibError):
    """Input point set is degenerate (too few / collinear / coincident)."""


class NoPlaneError(CalibError):
    """RANSAC found no plane above the minimum inlier ratio."""


class FitError(CalibError):
    """Ellipse fit failed (rank-deficient or no ellipse-signed solution)."""


class DegenerateConicError(CalibError):
    """Conic has B^2 - 4AC = 0; center undefined."""


class HoleCountError(CalibError):
    """Number of validated holes differs from 4."""

    def __init__(self, found: int, message: str | None = None):
        self.found = found
        super().__init__(message or f"expected 4 validated holes, found {found}")


class AmbiguousOrderError(CalibError):
    """Two non-equivalent hole orderings have indistinguishable residuals."""


class NoConvergenceError(CalibError):
    """Iterative undistortion did not converge."""


class DegenerateConfigurationError(CalibError):
    """PnP object points are collinear."""


class BehindCameraError(CalibError):
    """All PnP pose candidates place the board behind the camera."""


class InconsistentPosesError(CalibError):
    """Per-marker poses disagree by more than the rotation spread guard."""


class NoKnownMarkersError(CalibError):
    """No detection matches a marker id in the target description."""


class SceneMismatchError(CalibError):
    """A calibration scene has malformed correspondence sets."""


class NoVisibilityError(CalibError):
    """Board is back-facing or outside the scan pattern's field of view."""


class OutOfViewError(CalibError):
    """A marker corner projects outside the image or behind the camera."""


class PoseSamplingExhaustedError(CalibError):
    """Could not place the board inside the joint field of view."""
