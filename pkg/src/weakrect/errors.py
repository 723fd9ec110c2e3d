"""Exception hierarchy shared across the package."""


class WeakRectError(Exception):
    """Base class for all errors raised by weakrect."""


class ConfigError(WeakRectError):
    """Malformed configuration, intrinsics file, or command-line input."""


# geometry
class PointAtInfinityError(WeakRectError):
    """A homography maps a point onto the line at infinity."""


class BehindCameraError(WeakRectError):
    """A warped point ends up with non-positive depth."""


class AmbiguousHalfRotationError(WeakRectError):
    """Rotation angle too close to pi to split into two unique halves."""


# correspondence / pose
class DegenerateInputError(WeakRectError):
    """Input too small or otherwise unusable for feature detection."""


class DegenerateSampleError(WeakRectError):
    """Minimal sample does not determine a finite set of models."""


class InsufficientDataError(WeakRectError):
    """Fewer correspondences than the minimal solver needs."""


class EstimationFailedError(WeakRectError):
    """Robust estimation found no model with enough support."""


class CheiralityError(WeakRectError):
    """No pose candidate places most points in front of both cameras."""


class NoIntersectionError(WeakRectError):
    """Back-projected rays are parallel."""


# rectification
class NoOverlapError(WeakRectError):
    """Warped frames do not share a non-empty rectangle."""


class ExcessiveRotationError(WeakRectError):
    """Relative rotation is outside the range weak rectification handles."""


# synthetic data
class InfeasibleSceneError(WeakRectError):
    """Scene parameters push points out of the frame too often."""
