"""Ground-truth frames and the point-based synthetic scene oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .errors import InfeasibleSceneError
from .geometry import CameraIntrinsics, is_rotation, rodrigues_to_matrix


def pose_matrix(R: ArrayLike, t: ArrayLike) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = np.asarray(R, dtype=np.float64)
    T[:3, 3] = np.asarray(t, dtype=np.float64).reshape(3)
    return T


def invert_pose(T: ArrayLike) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    R, t = T[:3, :3], T[:3, 3]
    return pose_matrix(R.T, -R.T @ t)


def relative_pose(pose_a: ArrayLike, pose_b: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """``(R, t)`` taking camera-a coordinates to camera-b coordinates.

    Poses are world-from-camera, so the relative motion is ``inv(pose_b) @ pose_a``.
    """
    T = invert_pose(pose_b) @ np.asarray(pose_a, dtype=np.float64)
    return T[:3, :3].copy(), T[:3, 3].copy()


@dataclass
class GroundTruthFrame:
    """A frame with per-pixel depth (0 = invalid) and a world-from-camera pose."""

    depth: np.ndarray
    pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    image: str | None = None

    def __post_init__(self) -> None:
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.depth.ndim != 2:
            raise ValueError("depth must be a 2D map")
        if np.any(self.depth < 0) or not np.all(np.isfinite(self.depth)):
            raise ValueError("depth must be finite and non-negative")
        if self.pose.shape != (4, 4) or not is_rotation(self.pose[:3, :3]):
            raise ValueError("pose must be a 4x4 rigid transform")


class SyntheticScene(NamedTuple):
    frames: tuple[GroundTruthFrame, GroundTruthFrame]
    pts1: np.ndarray
    pts2: np.ndarray
    points: np.ndarray  # first-camera frame
    pts2_clean: np.ndarray


def synth_scene(
    n_points: int,
    depth_range: tuple[float, float],
    R: ArrayLike,
    t: ArrayLike,
    K: CameraIntrinsics,
    noise_px: float = 0.0,
    seed: int = 0,
    image_size: tuple[int, int] = (640, 480),
    max_batches: int = 50,
) -> SyntheticScene:
    """Random points in the first camera's frustum, seen by both cameras.

    Points sit on distinct pixel centres of the first view with depths drawn
    uniformly from ``depth_range``; candidates that leave the second frame are
    redrawn.  Gaussian noise (``noise_px``) perturbs the second-view observations
    only.  The first frame's depth map is sparse: non-zero exactly at ``pts1``.
    """
    lo, hi = depth_range
    if not 0 < lo <= hi:
        raise ValueError("depth range must be positive and ordered")
    R = np.asarray(R, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(3)
    w, h = image_size
    if n_points > w * h:
        raise InfeasibleSceneError("more points requested than pixels")
    rng = np.random.default_rng(seed)

    order = rng.permutation(w * h)
    cursor = 0
    kept_pix, kept_depth = [], []
    count = 0
    for _ in range(max_batches):
        need = n_points - count
        if need <= 0:
            break
        take = order[cursor : cursor + 2 * need]
        cursor += len(take)
        if len(take) == 0:
            break
        pix = np.stack([take % w, take // w], axis=1).astype(np.float64)
        depth = rng.uniform(lo, hi, len(take))
        X2 = depth[:, None] * K.normalize(pix) @ R.T + t
        inside = X2[:, 2] > 0
        p2 = K.project(np.where(inside[:, None], X2, 1.0))
        inside &= (p2[:, 0] >= 0) & (p2[:, 0] <= w - 1) & (p2[:, 1] >= 0) & (p2[:, 1] <= h - 1)
        kept_pix.append(pix[inside][:need])
        kept_depth.append(depth[inside][:need])
        count += len(kept_pix[-1])
    if count < n_points:
        raise InfeasibleSceneError(
            f"only {count}/{n_points} points stay in both frames; reduce the motion or widen the depth range"
        )

    pts1 = np.concatenate(kept_pix)
    depths = np.concatenate(kept_depth)
    points = depths[:, None] * K.normalize(pts1)
    pts2_clean = K.project(points @ R.T + t)
    pts2 = pts2_clean + rng.normal(0.0, noise_px, pts2_clean.shape) if noise_px > 0 else pts2_clean.copy()

    depth1 = np.zeros((h, w))
    depth1[pts1[:, 1].astype(int), pts1[:, 0].astype(int)] = depths
    frame1 = GroundTruthFrame(depth1, np.eye(4))
    frame2 = GroundTruthFrame(np.zeros((h, w)), invert_pose(pose_matrix(R, t)))
    return SyntheticScene((frame1, frame2), pts1, pts2, points, pts2_clean)


def random_rotation(rng: np.random.Generator, angle: float) -> np.ndarray:
    """Rotation by exactly ``angle`` radians about a uniformly random axis."""
    axis = rng.normal(size=3)
    return rodrigues_to_matrix(axis / np.linalg.norm(axis) * angle)
