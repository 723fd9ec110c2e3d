"""Weak rectification of monocular video frame pairs.

Selects keyframe pairs by their translational flow, estimates relative pose with
a five-point RANSAC, and warps each pair so that only translation remains
between the two views.
"""

__version__ = "0.1.0"

from .errors import WeakRectError
from .geometry import CameraIntrinsics
from .pose import RansacConfig, RelativePose, estimate_relative_pose
from .rectify import RectifiedPair, weak_rectify

__all__ = [
    "CameraIntrinsics",
    "RansacConfig",
    "RectifiedPair",
    "RelativePose",
    "WeakRectError",
    "estimate_relative_pose",
    "weak_rectify",
    "__version__",
]
