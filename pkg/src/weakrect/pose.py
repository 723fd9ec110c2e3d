"""Relative pose from correspondences: RANSAC over the five-point solver."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import least_squares

from .errors import (
    CheiralityError,
    DegenerateSampleError,
    EstimationFailedError,
    InsufficientDataError,
    NoIntersectionError,
)
from .fivepoint import five_point_essential
from .geometry import CameraIntrinsics, is_rotation, rodrigues_to_matrix, rotation_to_homography, skew, warp_rotational

logger = logging.getLogger(__name__)

_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])

# median rotation-only residual (px) below which a pair counts as pure rotation
PURE_ROTATION_PX = 0.5


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 10_000
    inlier_threshold: float = 1.0
    confidence: float = 0.999
    seed: int = 0
    min_inliers: int = 15
    refine: bool = True

    def __post_init__(self) -> None:
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if self.min_inliers < 5:
            raise ValueError("min_inliers must be at least 5")


@dataclass(frozen=True)
class RelativePose:
    """Second camera relative to the first: ``X2 = rotation @ X1 + translation``.

    Without a known scale the translation is a unit direction.
    """

    rotation: np.ndarray
    translation: np.ndarray
    scale_known: bool = False
    inlier_count: int = 0
    near_pure_rotation: bool = False

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not is_rotation(R):
            raise ValueError("rotation is not orthonormal with det 1")
        if not self.scale_known and abs(np.linalg.norm(t) - 1.0) > 1e-9:
            raise ValueError("scale-free translation must have unit norm")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)


class TriangulatedPoint(NamedTuple):
    point: np.ndarray  # first-camera frame
    depth1: float
    depth2: float


def essential_from_pose(R: ArrayLike, t: ArrayLike) -> np.ndarray:
    E = skew(t) @ np.asarray(R, dtype=np.float64)
    return E / np.linalg.norm(E)


def _homogeneous(p: np.ndarray) -> np.ndarray:
    return np.concatenate([p, np.ones(p.shape[:-1] + (1,))], axis=-1)


def sampson_error_px(E: ArrayLike, K: CameraIntrinsics, pts1: ArrayLike, pts2: ArrayLike) -> np.ndarray:
    """First-order geometric epipolar error in pixels.

    The Sampson distance is evaluated on pixel coordinates through
    ``F = K^-T E K^-1`` and scaled by sqrt(2), so that an offset of 1 px
    perpendicular to the epipolar line in one image reads as about 1 px.
    """
    E = np.asarray(E, dtype=np.float64)
    F = K.inverse.T @ E @ K.inverse
    h1 = _homogeneous(np.asarray(pts1, dtype=np.float64))
    h2 = _homogeneous(np.asarray(pts2, dtype=np.float64))
    Fx1 = h1 @ F.T
    Ftx2 = h2 @ F
    num = np.sum(h2 * Fx1, axis=-1)
    den = Fx1[..., 0] ** 2 + Fx1[..., 1] ** 2 + Ftx2[..., 0] ** 2 + Ftx2[..., 1] ** 2
    return math.sqrt(2.0) * np.abs(num) / np.sqrt(den)


def _signed_sampson(F: np.ndarray, h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    Fx1 = h1 @ F.T
    Ftx2 = h2 @ F
    num = np.sum(h2 * Fx1, axis=-1)
    den = Fx1[:, 0] ** 2 + Fx1[:, 1] ** 2 + Ftx2[:, 0] ** 2 + Ftx2[:, 1] ** 2
    return math.sqrt(2.0) * num / np.sqrt(den)


def _huber_cost(err: np.ndarray, scale: float) -> float:
    small = err <= scale
    return float(np.sum(np.where(small, 0.5 * err**2, scale * (err - 0.5 * scale))))


def adaptive_iterations(inlier_ratio: float, confidence: float, sample_size: int = 5) -> float:
    good = inlier_ratio**sample_size
    if good >= 1.0 - 1e-15:
        return 1.0
    if good <= 0.0:
        return math.inf
    return math.ceil(math.log(1.0 - confidence) / math.log(1.0 - good))


def _check_matches(pts1: ArrayLike, pts2: ArrayLike, minimum: int) -> tuple[np.ndarray, np.ndarray]:
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    if len(pts1) != len(pts2):
        raise ValueError("point arrays differ in length")
    if len(pts1) < minimum:
        raise InsufficientDataError(f"need at least {minimum} matches, got {len(pts1)}")
    return pts1, pts2


def decompose_essential(E: ArrayLike) -> list[tuple[np.ndarray, np.ndarray]]:
    """The four ``(R, t)`` factorizations of ``E`` with unit ``t``."""
    U, _, Vt = np.linalg.svd(np.asarray(E, dtype=np.float64))
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    Ra = U @ _W @ Vt
    Rb = U @ _W.T @ Vt
    t = U[:, 2] / np.linalg.norm(U[:, 2])
    return [(Ra, t), (Ra, -t), (Rb, t), (Rb, -t)]


def refine_essential(
    E: np.ndarray, K: CameraIntrinsics, pts1: np.ndarray, pts2: np.ndarray, huber_px: float | None = None
) -> np.ndarray:
    """Polish ``E`` by least squares on the pixel Sampson residuals over a 5-DoF pose.

    With ``huber_px`` set, residuals beyond that scale are down-weighted (Huber),
    which lets points in the noise tail contribute without letting outliers steer.
    """
    R0, t0 = decompose_essential(E)[0]
    # tangent basis of the unit sphere at t0
    basis = np.linalg.svd(t0.reshape(1, 3))[2][1:]
    h1, h2 = _homogeneous(pts1), _homogeneous(pts2)
    Kinv = K.inverse

    def unpack(x):
        R = rodrigues_to_matrix(x[:3]) @ R0
        t = t0 + x[3:] @ basis
        return R, t / np.linalg.norm(t)

    def residuals(x):
        R, t = unpack(x)
        F = Kinv.T @ skew(t) @ R @ Kinv
        return _signed_sampson(F, h1, h2)

    tol = dict(xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    if huber_px is None:
        sol = least_squares(residuals, np.zeros(5), method="lm", **tol)
    else:
        sol = least_squares(residuals, np.zeros(5), method="trf", loss="huber", f_scale=huber_px, **tol)
    return essential_from_pose(*unpack(sol.x))


def ransac_essential(
    pts1: ArrayLike, pts2: ArrayLike, K: CameraIntrinsics, cfg: RansacConfig = RansacConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Robust essential matrix; returns ``(E, inlier_mask)``.

    Models are ranked by inlier count, ties by the summed error of their inliers.
    Sampling stops at the adaptive bound for ``cfg.confidence`` or at
    ``cfg.max_iterations``.  With ``cfg.refine`` the winner is polished with a
    Huber loss over all matches within three thresholds of it; the polished
    model replaces the winner when it lowers that robust cost.
    """
    pts1, pts2 = _check_matches(pts1, pts2, 5)
    n = len(pts1)
    rng = np.random.default_rng(cfg.seed)
    x1, x2 = K.normalize(pts1), K.normalize(pts2)

    best_E, best_mask, best_key = None, None, (-1, 0.0)
    bound = float(cfg.max_iterations)
    iteration = 0
    while iteration < min(bound, cfg.max_iterations):
        iteration += 1
        sample = rng.choice(n, 5, replace=False)
        try:
            candidates = five_point_essential(x1[sample], x2[sample])
        except DegenerateSampleError:
            continue
        for E in candidates:
            err = sampson_error_px(E, K, pts1, pts2)
            mask = err < cfg.inlier_threshold
            key = (int(mask.sum()), -float(err[mask].sum()))
            if key > best_key:
                best_E, best_mask, best_key = E, mask, key
                bound = adaptive_iterations(key[0] / n, cfg.confidence)

    if best_E is None or best_key[0] < cfg.min_inliers:
        raise EstimationFailedError(f"best model has {max(best_key[0], 0)} inliers, need {cfg.min_inliers}")
    logger.debug("ransac: %d iterations, %d/%d inliers", iteration, best_key[0], n)

    if cfg.refine:
        # robust polish over everything near the model, not just the hard inliers
        near = sampson_error_px(best_E, K, pts1, pts2) < 3.0 * cfg.inlier_threshold
        E = refine_essential(best_E, K, pts1[near], pts2[near], huber_px=cfg.inlier_threshold)
        before = _huber_cost(sampson_error_px(best_E, K, pts1[near], pts2[near]), cfg.inlier_threshold)
        after = _huber_cost(sampson_error_px(E, K, pts1[near], pts2[near]), cfg.inlier_threshold)
        mask = sampson_error_px(E, K, pts1, pts2) < cfg.inlier_threshold
        if after <= before and mask.sum() >= cfg.min_inliers:
            best_E, best_mask = E, mask
    return best_E, best_mask


def _triangulate_batch(x1: np.ndarray, x2: np.ndarray, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear (DLT) triangulation of normalized rays; homogeneous ``(n, 4)`` output."""
    P1 = np.hstack([np.eye(3), np.zeros((3, 1))])
    P2 = np.hstack([R, t.reshape(3, 1)])
    A = np.stack(
        [
            x1[:, 0:1] * P1[2] - P1[0],
            x1[:, 1:2] * P1[2] - P1[1],
            x2[:, 0:1] * P2[2] - P2[0],
            x2[:, 1:2] * P2[2] - P2[1],
        ],
        axis=1,
    )
    A /= np.linalg.norm(A, axis=2, keepdims=True)
    return np.linalg.svd(A)[2][:, -1, :]


def _positive_depths(x1: np.ndarray, x2: np.ndarray, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    Xh = _triangulate_batch(x1, x2, R, t)
    w = Xh[:, 3]
    finite = np.abs(w) > 1e-12
    X = np.where(finite[:, None], Xh[:, :3] / np.where(finite, w, 1.0)[:, None], 0.0)
    z1 = X[:, 2]
    z2 = X @ R[2] + t[2]
    return finite & (z1 > 0) & (z2 > 0)


def rotation_from_bearings(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Least-squares rotation aligning unit bearings ``x1`` onto ``x2`` (Kabsch)."""
    b1 = x1 / np.linalg.norm(x1, axis=1, keepdims=True)
    b2 = x2 / np.linalg.norm(x2, axis=1, keepdims=True)
    U, _, Vt = np.linalg.svd(b2.T @ b1)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotation_residual_px(R: np.ndarray, K: CameraIntrinsics, pts1: np.ndarray, pts2: np.ndarray) -> np.ndarray:
    H = rotation_to_homography(K, R)
    return np.linalg.norm(warp_rotational(H, pts1) - pts2, axis=1)


def recover_pose(E: ArrayLike, pts1: ArrayLike, pts2: ArrayLike, K: CameraIntrinsics) -> RelativePose:
    """Pick the factorization of ``E`` that puts most inliers in front of both cameras.

    If a rotation alone explains the inliers (median residual under 0.5 px) the
    translation direction is meaningless; the pose then carries the best-fit
    rotation and ``near_pure_rotation=True``.
    """
    pts1, pts2 = _check_matches(pts1, pts2, 1)
    x1, x2 = K.normalize(pts1), K.normalize(pts2)
    candidates = decompose_essential(E)

    R_rot = rotation_from_bearings(x1, x2)
    if np.median(rotation_residual_px(R_rot, K, pts1, pts2)) < PURE_ROTATION_PX:
        return RelativePose(R_rot, candidates[0][1], inlier_count=len(pts1), near_pure_rotation=True)

    counts = [int(_positive_depths(x1, x2, R, t).sum()) for R, t in candidates]
    best = int(np.argmax(counts))
    if counts[best] <= 0.5 * len(pts1):
        raise CheiralityError(f"best candidate has {counts[best]}/{len(pts1)} points in front")
    R, t = candidates[best]
    return RelativePose(R, t, inlier_count=len(pts1))


def ransac_rotation(
    pts1: ArrayLike, pts2: ArrayLike, K: CameraIntrinsics, cfg: RansacConfig = RansacConfig()
) -> tuple[RelativePose, np.ndarray]:
    """Pure-rotation model by 2-point RANSAC; fallback when no essential matrix fits."""
    pts1, pts2 = _check_matches(pts1, pts2, 2)
    n = len(pts1)
    rng = np.random.default_rng(cfg.seed)
    x1, x2 = K.normalize(pts1), K.normalize(pts2)
    best_mask, best_key = None, (-1, 0.0)
    bound = float(cfg.max_iterations)
    iteration = 0
    while iteration < min(bound, cfg.max_iterations):
        iteration += 1
        sample = rng.choice(n, 2, replace=False)
        R = rotation_from_bearings(x1[sample], x2[sample])
        err = rotation_residual_px(R, K, pts1, pts2)
        mask = err < cfg.inlier_threshold
        key = (int(mask.sum()), -float(err[mask].sum()))
        if key > best_key:
            best_mask, best_key = mask, key
            bound = adaptive_iterations(key[0] / n, cfg.confidence, sample_size=2)
    if best_mask is None or best_key[0] < cfg.min_inliers:
        raise EstimationFailedError("no rotation-only model with enough support")
    R = rotation_from_bearings(x1[best_mask], x2[best_mask])
    mask = rotation_residual_px(R, K, pts1, pts2) < cfg.inlier_threshold
    if mask.sum() < cfg.min_inliers:
        raise EstimationFailedError("no rotation-only model with enough support")
    pose = RelativePose(R, np.array([0.0, 0.0, 1.0]), inlier_count=int(mask.sum()), near_pure_rotation=True)
    return pose, mask


def estimate_relative_pose(
    pts1: ArrayLike, pts2: ArrayLike, K: CameraIntrinsics, cfg: RansacConfig = RansacConfig()
) -> tuple[RelativePose, np.ndarray]:
    """Essential-matrix pose with a rotation-only fallback; returns ``(pose, inlier_mask)``."""
    pts1, pts2 = _check_matches(pts1, pts2, 5)
    try:
        E, mask = ransac_essential(pts1, pts2, K, cfg)
        pose = recover_pose(E, pts1[mask], pts2[mask], K)
        return pose, mask
    except (EstimationFailedError, CheiralityError) as exc:
        logger.debug("essential model rejected (%s); trying rotation-only model", exc)
        return ransac_rotation(pts1, pts2, K, cfg)


def triangulate_midpoint(
    K: CameraIntrinsics, pose: RelativePose | tuple[ArrayLike, ArrayLike], p1: ArrayLike, p2: ArrayLike
) -> TriangulatedPoint:
    """Triangulate one correspondence (linear DLT) in the first camera frame.

    Depths in both cameras are reported with their sign, so points behind a
    camera show up as negative depths rather than errors.
    """
    if isinstance(pose, RelativePose):
        R, t = pose.rotation, pose.translation
    else:
        R, t = (np.asarray(a, dtype=np.float64) for a in pose)
    t = t.reshape(3)
    x1 = K.normalize(np.asarray(p1, dtype=np.float64))
    x2 = K.normalize(np.asarray(p2, dtype=np.float64))
    if np.linalg.norm(t) < 1e-12:
        raise NoIntersectionError("zero baseline")
    d1, d2 = x1, R.T @ x2
    sin_angle = np.linalg.norm(np.cross(d1, d2)) / (np.linalg.norm(d1) * np.linalg.norm(d2))
    if sin_angle < 1e-12:
        raise NoIntersectionError("rays are parallel")
    Xh = _triangulate_batch(x1[None], x2[None], R, t)[0]
    X = Xh[:3] / Xh[3]
    return TriangulatedPoint(X, float(X[2]), float(R[2] @ X + t[2]))
