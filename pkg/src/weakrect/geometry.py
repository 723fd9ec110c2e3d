"""Pinhole warping, rotation parameterizations and flow decomposition.

Conventions used throughout the package:

* A pixel is ``(u, v)`` with ``u`` along image columns; integer values are
  pixel centres.
* A relative pose ``(R, t)`` maps first-camera coordinates into the second
  camera: ``X2 = R @ X1 + t``.
* Angles are radians.  Degrees only appear at report/CLI boundaries.

Point arguments accept a single ``(2,)`` pixel or any ``(..., 2)`` stack;
depths broadcast against the leading shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import AmbiguousHalfRotationError, BehindCameraError, PointAtInfinityError

Array = NDArray[np.float64]

_DEN_EPS = 1e-12
_SMALL_ANGLE = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Ideal pinhole intrinsics (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "cx", "cy"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")

    @property
    def matrix(self) -> Array:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def inverse(self) -> Array:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def normalize(self, p: ArrayLike) -> Array:
        """Pixels -> normalized image coordinates (the K^-1 ray at unit depth)."""
        p = np.asarray(p, dtype=np.float64)
        x = (p[..., 0] - self.cx) / self.fx
        y = (p[..., 1] - self.cy) / self.fy
        return np.stack([x, y, np.ones_like(x)], axis=-1)

    def project(self, X: ArrayLike) -> Array:
        """Camera-frame 3D points -> pixels.  No cheirality check."""
        X = np.asarray(X, dtype=np.float64)
        u = self.fx * X[..., 0] / X[..., 2] + self.cx
        v = self.fy * X[..., 1] / X[..., 2] + self.cy
        return np.stack([u, v], axis=-1)

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics after resizing the image by ``factor`` (pixel-centre aware)."""
        return CameraIntrinsics(
            self.fx * factor,
            self.fy * factor,
            (self.cx + 0.5) * factor - 0.5,
            (self.cy + 0.5) * factor - 0.5,
        )

    def as_dict(self) -> dict[str, float]:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}


class FlowSample(NamedTuple):
    """Rotational and translational flow magnitudes (pixels)."""

    rot_mag: Array
    trans_mag: Array


def skew(v: ArrayLike) -> Array:
    x, y, z = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def is_rotation(R: ArrayLike, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.abs(R.T @ R - np.eye(3)).max() <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


def rodrigues_to_matrix(r: ArrayLike) -> Array:
    """Exponential map from an axis-angle vector to a rotation matrix."""
    r = np.asarray(r, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(r)):
        raise ValueError("rotation vector must be finite")
    theta = float(np.linalg.norm(r))
    S = skew(r)
    if theta < _SMALL_ANGLE:
        # Taylor coefficients of sin(t)/t and (1 - cos t)/t^2
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
    else:
        a = np.sin(theta) / theta
        half = np.sin(0.5 * theta) / theta
        b = 2.0 * half * half
    return np.eye(3) + a * S + b * (S @ S)


def matrix_to_rodrigues(R: ArrayLike, return_branch: bool = False):
    """Logarithm map from a rotation matrix to its axis-angle vector.

    The angle comes from ``atan2`` of the skew and trace parts, which keeps full
    precision near 0 and near pi.  For angles beyond pi/2 the axis is read off the
    symmetric part (largest-diagonal column) and its sign taken from the skew
    part.  Within 1e-9 of pi the sign is ambiguous; the representative whose
    first non-negligible component is positive is returned.

    With ``return_branch=True`` a ``(r, branch)`` tuple is returned where
    ``branch`` is one of ``"small"``, ``"regular"``, ``"symmetric"``, ``"near_pi"``.
    """
    R = np.asarray(R, dtype=np.float64)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = float(np.linalg.norm(w))
    c = 0.5 * (np.trace(R) - 1.0)
    theta = float(np.arctan2(s, c))

    if c >= 0.0:
        if theta < _SMALL_ANGLE:
            r, branch = w * (1.0 + theta**2 / 6.0), "small"
        else:
            r, branch = w * (theta / s), "regular"
    else:
        sym = 0.5 * (R + R.T)
        k = int(np.argmax(np.diag(sym)))
        col = (sym[:, k] - c * np.eye(3)[:, k]) / (1.0 - c)
        axis = col / np.sqrt(col[k])
        axis /= np.linalg.norm(axis)
        along = float(axis @ w)
        theta = float(np.arctan2(abs(along), c))
        if np.pi - theta < 1e-9:
            branch = "near_pi"
            flip = axis[np.argmax(np.abs(axis) > 1e-12)] < 0
        else:
            branch = "symmetric"
            flip = along < 0
        r = (-axis if flip else axis) * theta

    return (r, branch) if return_branch else r


def rotation_angle(R: ArrayLike) -> float:
    """Geodesic angle of a rotation (radians)."""
    R = np.asarray(R, dtype=np.float64)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.arctan2(np.linalg.norm(w), 0.5 * (np.trace(R) - 1.0)))


def rotation_distance(Ra: ArrayLike, Rb: ArrayLike) -> float:
    return rotation_angle(np.asarray(Ra).T @ np.asarray(Rb))


def normalize_homography(h: ArrayLike) -> tuple[Array, bool]:
    """Scale ``h`` so that h33 = 1; returns ``(h, normalized)``.

    When |h33| <= 1e-12 the matrix is returned untouched with ``normalized=False``.
    """
    h = np.asarray(h, dtype=np.float64)
    if abs(h[2, 2]) > _DEN_EPS:
        return h / h[2, 2], True
    return h.copy(), False


def rotation_to_homography(K: CameraIntrinsics, R: ArrayLike) -> Array:
    """Infinite homography K R K^-1 induced by a pure camera rotation."""
    H = K.matrix @ np.asarray(R, dtype=np.float64) @ K.inverse
    return normalize_homography(H)[0]


def apply_homography(H: ArrayLike, p: ArrayLike) -> Array:
    """Map pixels through ``H``; raises if any lands at infinity."""
    H = np.asarray(H, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    u, v = p[..., 0], p[..., 1]
    den = H[2, 0] * u + H[2, 1] * v + H[2, 2]
    if np.any(np.abs(den) < _DEN_EPS):
        raise PointAtInfinityError("homography maps a point to infinity")
    u2 = (H[0, 0] * u + H[0, 1] * v + H[0, 2]) / den
    v2 = (H[1, 0] * u + H[1, 1] * v + H[1, 2]) / den
    return np.stack([u2, v2], axis=-1)


def warp_rotational(H: ArrayLike, p: ArrayLike) -> Array:
    """Rotation-only warp of pixels.  Depth plays no part."""
    return apply_homography(H, p)


def warp_translational(
    K: CameraIntrinsics, t: ArrayLike, d1: ArrayLike, p: ArrayLike
) -> tuple[Array, Array]:
    """Pure-translation warp; returns ``(p2, d2)`` with ``d2 = d1 + t3``."""
    t = np.asarray(t, dtype=np.float64).reshape(3)
    p = np.asarray(p, dtype=np.float64)
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = d1 + t[2]
    if np.any(d2 <= 0):
        raise BehindCameraError("translated point is behind the second camera")
    # offset form of (d1 * u + fx * t1 + cx * t3) / d2, exact when t = 0
    u2 = p[..., 0] + (K.fx * t[0] + K.cx * t[2] - t[2] * p[..., 0]) / d2
    v2 = p[..., 1] + (K.fy * t[1] + K.cy * t[2] - t[2] * p[..., 1]) / d2
    return np.stack([u2, v2], axis=-1), d2


def _rotated_rays(K: CameraIntrinsics, R: Array, p: Array) -> Array:
    return K.normalize(p) @ R.T


def warp_full(
    K: CameraIntrinsics, R: ArrayLike, t: ArrayLike, d1: ArrayLike, p: ArrayLike
) -> tuple[Array, Array]:
    """Depth-and-pose warp of pixels; returns ``(p2, d2)``.

    Computed as the rotational landing point plus a translational correction, so
    ``t = 0`` reproduces the rotational warp for every depth bit for bit.
    """
    R = np.asarray(R, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(3)
    if np.array_equal(R, np.eye(3)):
        return warp_translational(K, t, d1, p)
    p = np.asarray(p, dtype=np.float64)
    d1 = np.asarray(d1, dtype=np.float64)
    Y = _rotated_rays(K, R, p)
    if np.any(np.abs(Y[..., 2]) < _DEN_EPS):
        raise PointAtInfinityError("rotated ray is parallel to the image plane")
    u_r = K.fx * Y[..., 0] / Y[..., 2] + K.cx
    v_r = K.fy * Y[..., 1] / Y[..., 2] + K.cy
    d2 = d1 * Y[..., 2] + t[2]
    if np.any(d2 <= 0):
        raise BehindCameraError("warped point is behind the second camera")
    u2 = u_r + (K.fx * t[0] + K.cx * t[2] - t[2] * u_r) / d2
    v2 = v_r + (K.fy * t[1] + K.cy * t[2] - t[2] * v_r) / d2
    return np.stack([u2, v2], axis=-1), d2


def half_rotations(R: ArrayLike) -> tuple[Array, Array]:
    """Split ``R`` into ``(R1, R2) = (exp(r/2), exp(-r/2))``.

    ``R2 @ R @ R1.T`` is the identity, i.e. applying R1 to the first view and R2 to
    the second removes their relative rotation.
    """
    r = matrix_to_rodrigues(R)
    if np.linalg.norm(r) >= np.pi - 1e-6:
        raise AmbiguousHalfRotationError("rotation angle too close to pi to halve")
    return rodrigues_to_matrix(0.5 * r), rodrigues_to_matrix(-0.5 * r)


def flow_magnitude(p: ArrayLike, q: ArrayLike) -> Array:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return np.hypot(q[..., 0] - p[..., 0], q[..., 1] - p[..., 1])


def decompose_flow(p1: ArrayLike, p2: ArrayLike, H: ArrayLike) -> FlowSample:
    """Split the displacement p1 -> p2 at the rotational landing point H(p1)."""
    p_rot = warp_rotational(H, p1)
    return FlowSample(flow_magnitude(p1, p_rot), flow_magnitude(p_rot, p2))


def translational_flow(
    K: CameraIntrinsics, R: ArrayLike, t: ArrayLike, d1: ArrayLike, p: ArrayLike
) -> Array:
    """Translational flow vectors from the pure-translation warp of the rotated ray.

    Independent of :func:`warp_full`: the rotated unit-depth ray is rescaled to
    depth ``d1 * Yz`` and pushed through the pure-translation warp.
    """
    R = np.asarray(R, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    Y = _rotated_rays(K, R, p)
    p_rot = K.project(Y)
    p_trans, _ = warp_translational(K, t, np.asarray(d1) * Y[..., 2], p_rot)
    return p_trans - p_rot
