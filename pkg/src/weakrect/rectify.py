"""Weak rectification: rotate both views halfway so only translation remains.

The first image is warped by ``K R1 K^-1`` and the second by ``K R2 K^-1`` into a
common image plane, both are cropped to a shared rectangle, and the principal
point is shifted by the crop origin.  Coordinates are pixel centres: the source
frame spans ``[0, w-1] x [0, h-1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .correspondence import MatchingConfig, match_arrays, match_images
from .errors import ExcessiveRotationError, NoOverlapError
from .geometry import CameraIntrinsics, half_rotations, rotation_angle, rotation_to_homography
from .pose import RansacConfig, estimate_relative_pose

# a warped corner with |w| below this is treated as lying at infinity
_HORIZON_EPS = 1e-9
# tolerance when rounding crop edges and testing source bounds
_EDGE_EPS = 1e-9


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class ResampleSpec:
    """Bilinear resampling with a fill policy for samples outside the source.

    ``mark-invalid`` fills with ``fill_value`` and asks callers to keep the
    validity mask; ``constant`` only fills.
    """

    method: Literal["bilinear"] = "bilinear"
    fill: Literal["mark-invalid", "constant"] = "mark-invalid"
    fill_value: float = 0.0

    def __post_init__(self) -> None:
        if self.method != "bilinear":
            raise ValueError(f"unsupported resampling method {self.method!r}")
        if self.fill not in ("mark-invalid", "constant"):
            raise ValueError(f"unknown fill policy {self.fill!r}")


class Warped(NamedTuple):
    image: np.ndarray
    valid: np.ndarray  # True where the source was sampled


@dataclass
class RectifiedPair:
    img1: np.ndarray
    img2: np.ndarray
    valid1: np.ndarray
    valid2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    crop: Rect
    K_out: CameraIntrinsics
    residual_rotation_deg: float | None = None


def frame_corners(size: tuple[int, int]) -> np.ndarray:
    """Pixel-centre corners TL, TR, BR, BL of a ``(w, h)`` frame."""
    w, h = size
    return np.array([[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]])


def warp_corners(H: ArrayLike, size: tuple[int, int]) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    c = np.hstack([frame_corners(size), np.ones((4, 1))]) @ H.T
    if np.any(c[:, 2] <= _HORIZON_EPS):
        raise NoOverlapError("the warped frame reaches the horizon")
    return c[:, :2] / c[:, 2:]


def inscribed_box(quad: np.ndarray) -> tuple[float, float, float, float]:
    """Axis-aligned box inside a TL, TR, BR, BL quadrilateral: (xmin, ymin, xmax, ymax).

    Each side is pushed to the inner of its two corners, which keeps the box on
    the inner side of every edge for the near-rectangular quads produced here.
    """
    tl, tr, br, bl = quad
    return (max(tl[0], bl[0]), max(tl[1], tr[1]), min(tr[0], br[0]), min(bl[1], br[1]))


def compute_output_bounds(H1: ArrayLike, H2: ArrayLike, size: tuple[int, int]) -> Rect:
    """Integer rectangle in the common plane covered by both warped frames."""
    b1 = inscribed_box(warp_corners(H1, size))
    b2 = inscribed_box(warp_corners(H2, size))
    xmin, ymin = max(b1[0], b2[0]), max(b1[1], b2[1])
    xmax, ymax = min(b1[2], b2[2]), min(b1[3], b2[3])
    x0, y0 = math.ceil(xmin - _EDGE_EPS), math.ceil(ymin - _EDGE_EPS)
    x1, y1 = math.floor(xmax + _EDGE_EPS), math.floor(ymax + _EDGE_EPS)
    if x1 < x0 or y1 < y0:
        raise NoOverlapError("the warped frames share no rectangle")
    return Rect(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def _bilinear(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    x0 = np.clip(np.floor(sx), 0, max(w - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(sy), 0, max(h - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx, fy = sx - x0, sy - y0
    if img.ndim == 3:
        fx, fy = fx[..., None], fy[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def warp_image(img: np.ndarray, H: ArrayLike, bounds: Rect, spec: ResampleSpec = ResampleSpec()) -> Warped:
    """Inverse-map ``img`` through ``H`` onto the pixels of ``bounds``.

    Output pixel ``(i, j)`` is the common-plane point ``(bounds.x + i, bounds.y + j)``
    and samples the source at ``H^-1`` of it.  Integer images come back rounded to
    their own dtype.
    """
    bounds = Rect(*bounds)
    if bounds.w <= 0 or bounds.h <= 0:
        raise ValueError("bounds must be non-empty")
    src = np.asarray(img)
    h, w = src.shape[:2]
    Hinv = np.linalg.inv(np.asarray(H, dtype=np.float64))
    u, v = np.meshgrid(
        np.arange(bounds.x, bounds.x + bounds.w, dtype=np.float64),
        np.arange(bounds.y, bounds.y + bounds.h, dtype=np.float64),
    )
    den = Hinv[2, 0] * u + Hinv[2, 1] * v + Hinv[2, 2]
    ahead = den > _HORIZON_EPS
    safe = np.where(ahead, den, 1.0)
    sx = (Hinv[0, 0] * u + Hinv[0, 1] * v + Hinv[0, 2]) / safe
    sy = (Hinv[1, 0] * u + Hinv[1, 1] * v + Hinv[1, 2]) / safe
    valid = (
        ahead
        & (sx >= -_EDGE_EPS) & (sx <= w - 1 + _EDGE_EPS)
        & (sy >= -_EDGE_EPS) & (sy <= h - 1 + _EDGE_EPS)
    )
    sx = np.clip(np.where(valid, sx, 0.0), 0.0, w - 1.0)
    sy = np.clip(np.where(valid, sy, 0.0), 0.0, h - 1.0)
    out = _bilinear(src.astype(np.float64), sx, sy)
    mask = valid[..., None] if out.ndim == 3 else valid
    out = np.where(mask, out, spec.fill_value)
    if np.issubdtype(src.dtype, np.integer):
        info = np.iinfo(src.dtype)
        out = np.clip(np.rint(out), info.min, info.max).astype(src.dtype)
    return Warped(out, valid)


def update_intrinsics(K: CameraIntrinsics, crop: Rect) -> CameraIntrinsics:
    """Intrinsics of the cropped common-plane image: the principal point moves by the crop origin."""
    return CameraIntrinsics(K.fx, K.fy, K.cx - crop[0], K.cy - crop[1])


def rectifying_homographies(K: CameraIntrinsics, R: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    R1, R2 = half_rotations(R)
    return rotation_to_homography(K, R1), rotation_to_homography(K, R2)


def weak_rectify(
    img1: np.ndarray,
    img2: np.ndarray,
    K: CameraIntrinsics,
    R: ArrayLike,
    spec: ResampleSpec = ResampleSpec(),
) -> RectifiedPair:
    """Remove the relative rotation ``R`` (``X2 = R X1 + t``) from an image pair.

    The translation between the views is left as it is.
    """
    img1, img2 = np.asarray(img1), np.asarray(img2)
    if img1.shape[:2] != img2.shape[:2]:
        raise ValueError(f"image sizes differ: {img1.shape[:2]} vs {img2.shape[:2]}")
    if rotation_angle(R) >= math.pi / 2:
        raise ExcessiveRotationError(f"rotation of {math.degrees(rotation_angle(R)):.1f} deg is too large")
    H1, H2 = rectifying_homographies(K, R)
    size = (img1.shape[1], img1.shape[0])
    crop = compute_output_bounds(H1, H2, size)
    w1 = warp_image(img1, H1, crop, spec)
    w2 = warp_image(img2, H2, crop, spec)
    return RectifiedPair(w1.image, w2.image, w1.valid, w2.valid, H1, H2, crop, update_intrinsics(K, crop))


def measure_residual_rotation(
    pair: RectifiedPair,
    matching: MatchingConfig = MatchingConfig(),
    ransac: RansacConfig = RansacConfig(),
) -> float:
    """Rotation (degrees) still visible between the rectified images, re-estimated from features."""
    matches = match_images(pair.img1, pair.img2, matching)
    pts1, pts2 = match_arrays(matches)
    pose, _ = estimate_relative_pose(pts1, pts2, pair.K_out, ransac)
    pair.residual_rotation_deg = math.degrees(rotation_angle(pose.rotation))
    return pair.residual_rotation_deg
