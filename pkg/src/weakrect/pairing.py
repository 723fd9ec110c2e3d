"""Keyframe pairing: downsample a sequence, pair each keyframe with the next few,
estimate each pair's pose and keep pairs whose mean translational flow is in range.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike

from .correspondence import Features, MatchingConfig, SiftDetector, gms_filter, match_arrays, match_ratio_test
from .errors import InsufficientDataError, WeakRectError
from .fileio import load_gray
from .geometry import CameraIntrinsics, decompose_flow, rotation_to_homography
from .pose import RansacConfig, RelativePose, estimate_relative_pose

logger = logging.getLogger(__name__)


class PairStatus(str, enum.Enum):
    PENDING = "pending"
    ACCEPTED = "accepted"
    REJECTED_FLOW_LOW = "rejected_flow_low"
    REJECTED_FLOW_HIGH = "rejected_flow_high"
    REJECTED_NO_POSE = "rejected_no_pose"
    REJECTED_NO_OVERLAP = "rejected_no_overlap"
    REJECTED_FRAME_CAP = "rejected_frame_cap"


# accepted pairs may still be demoted later (rectification, per-frame cap)
_DEMOTIONS = {PairStatus.REJECTED_NO_OVERLAP, PairStatus.REJECTED_FRAME_CAP}


@dataclass(frozen=True)
class FrameRef:
    index: int
    path: str
    timestamp: float | None = None


@dataclass(frozen=True)
class PairingConfig:
    m: int = 10
    k: int = 10
    flow_min: float = 10.0
    flow_max: float = 50.0
    max_uses_per_frame: int | None = None

    def __post_init__(self) -> None:
        if self.m < 1 or self.k < 1:
            raise ValueError("m and k must be at least 1")
        if not 0.0 <= self.flow_min < self.flow_max:
            raise ValueError("need 0 <= flow_min < flow_max")
        if self.max_uses_per_frame is not None and self.max_uses_per_frame < 1:
            raise ValueError("max_uses_per_frame must be at least 1")


@dataclass
class PairCandidate:
    a: FrameRef
    b: FrameRef
    pose: RelativePose | None = None
    mean_trans_flow: float | None = None
    inlier_count: int = 0
    status: PairStatus = PairStatus.PENDING
    reason: str = ""
    inliers: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.b.index <= self.a.index:
            raise ValueError("a pair must run forward in time")

    @property
    def key(self) -> tuple[int, int]:
        return (self.a.index, self.b.index)

    def resolve(self, status: PairStatus, reason: str = "") -> None:
        """Move to a terminal status; only pending pairs (or demotions of accepted ones) may change."""
        status = PairStatus(status)
        allowed = self.status is PairStatus.PENDING or (
            self.status is PairStatus.ACCEPTED and status in _DEMOTIONS
        )
        if not allowed or status is PairStatus.PENDING:
            raise ValueError(f"cannot move pair {self.key} from {self.status.value} to {status.value}")
        self.status = status
        self.reason = reason


def keyframe_downsample(frames: Sequence[FrameRef], m: int) -> list[FrameRef]:
    """Every ``m``-th frame starting with the first."""
    if m < 1:
        raise ValueError("stride m must be at least 1")
    return list(frames[::m])


def candidate_pairs(keyframes: Sequence[FrameRef], k: int) -> list[PairCandidate]:
    """Each keyframe paired with each of the following ``k`` keyframes."""
    if k < 1:
        raise ValueError("window k must be at least 1")
    indices = [f.index for f in keyframes]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError("frame indices must be strictly increasing")
    n = len(keyframes)
    return [PairCandidate(keyframes[i], keyframes[j]) for i in range(n) for j in range(i + 1, min(i + k, n - 1) + 1)]


def mean_translational_flow(
    pts1: ArrayLike, pts2: ArrayLike, K: CameraIntrinsics, rotation: RelativePose | ArrayLike
) -> float:
    """Mean translational flow (px) of inlier matches; needs no depth.

    Each match is split at the point where the rotation alone would carry it,
    and the remaining displacement is averaged.
    """
    R = rotation.rotation if isinstance(rotation, RelativePose) else np.asarray(rotation, dtype=np.float64)
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    if len(pts1) == 0:
        raise InsufficientDataError("no inlier matches")
    H = rotation_to_homography(K, R)
    return float(np.mean(decompose_flow(pts1, pts2, H).trans_mag))


def select_pairs(candidates: Iterable[PairCandidate], cfg: PairingConfig) -> dict[PairStatus, list[PairCandidate]]:
    """Give every pending candidate a terminal status and partition by status.

    Acceptance is the open interval ``flow_min < flow < flow_max``.  With
    ``cfg.max_uses_per_frame`` set, accepted pairs are then capped in order.
    """
    candidates = list(candidates)
    for c in candidates:
        if c.status is not PairStatus.PENDING:
            continue
        if c.pose is None or c.mean_trans_flow is None:
            c.resolve(PairStatus.REJECTED_NO_POSE, c.reason or "no pose")
        elif c.mean_trans_flow <= cfg.flow_min:
            c.resolve(PairStatus.REJECTED_FLOW_LOW, f"flow {c.mean_trans_flow:.3f} <= {cfg.flow_min:g}")
        elif c.mean_trans_flow >= cfg.flow_max:
            c.resolve(PairStatus.REJECTED_FLOW_HIGH, f"flow {c.mean_trans_flow:.3f} >= {cfg.flow_max:g}")
        else:
            c.resolve(PairStatus.ACCEPTED)
    if cfg.max_uses_per_frame is not None:
        uses: dict[int, int] = {}
        for c in candidates:
            if c.status is not PairStatus.ACCEPTED:
                continue
            if max(uses.get(c.a.index, 0), uses.get(c.b.index, 0)) >= cfg.max_uses_per_frame:
                c.resolve(PairStatus.REJECTED_FRAME_CAP, f"frame used {cfg.max_uses_per_frame} times")
                continue
            for i in c.key:
                uses[i] = uses.get(i, 0) + 1
    parts: dict[PairStatus, list[PairCandidate]] = {s: [] for s in PairStatus if s is not PairStatus.PENDING}
    for c in candidates:
        parts[c.status].append(c)
    return parts


# ---- correspondence sources --------------------------------------------------

CorrespondenceProvider = Callable[[FrameRef, FrameRef], tuple[np.ndarray, np.ndarray]]


@lru_cache(maxsize=32)
def _features(path: str, max_features: int) -> tuple[Features, tuple[int, int]]:
    img = load_gray(path)
    return SiftDetector(max_features=max_features)(img), (img.shape[1], img.shape[0])


@dataclass(frozen=True)
class ImageMatcher:
    """Matches between two frames' image files: SIFT, ratio test, then GMS."""

    cfg: MatchingConfig = MatchingConfig()

    def __call__(self, a: FrameRef, b: FrameRef) -> tuple[np.ndarray, np.ndarray]:
        fa, dims_a = _features(a.path, self.cfg.max_features)
        fb, dims_b = _features(b.path, self.cfg.max_features)
        matches = match_ratio_test(fa, fb, self.cfg.ratio_max)
        if self.cfg.use_gms and matches:
            matches = gms_filter(matches, dims_a, dims_b, self.cfg.gms_grid, self.cfg.gms_alpha)
        return match_arrays(matches)


# ---- per-pair evaluation -----------------------------------------------------


class PairResult(NamedTuple):
    pose: RelativePose | None
    mean_trans_flow: float | None
    inlier_count: int
    inliers: tuple[np.ndarray, np.ndarray] | None
    reason: str


def pair_seed(seed: int, a: int, b: int) -> int:
    """Independent RANSAC seed per pair, so results do not depend on scheduling."""
    return int(np.random.SeedSequence([seed, a, b]).generate_state(1)[0])


def evaluate_pair(
    a: FrameRef,
    b: FrameRef,
    K: CameraIntrinsics,
    provider: CorrespondenceProvider,
    ransac: RansacConfig = RansacConfig(),
) -> PairResult:
    try:
        pts1, pts2 = provider(a, b)
        pose, mask = estimate_relative_pose(pts1, pts2, K, ransac)
        in1, in2 = np.asarray(pts1)[mask], np.asarray(pts2)[mask]
        flow = mean_translational_flow(in1, in2, K, pose)
    except WeakRectError as exc:
        return PairResult(None, None, 0, None, f"{type(exc).__name__}: {exc}")
    return PairResult(pose, flow, int(mask.sum()), (in1, in2), "")


def _evaluate_task(task) -> PairResult:
    return evaluate_pair(*task)


def pair_sequence(
    frames: Sequence[FrameRef],
    K: CameraIntrinsics,
    cfg: PairingConfig = PairingConfig(),
    provider: CorrespondenceProvider | None = None,
    ransac: RansacConfig = RansacConfig(),
    jobs: int = 1,
) -> list[PairCandidate]:
    """Run keyframing, candidate generation, pose estimation and selection.

    ``ransac.seed`` is the run seed; each pair derives its own from it.  Results
    are collected in candidate order, so any ``jobs`` gives the same output.
    """
    provider = provider or ImageMatcher()
    candidates = candidate_pairs(keyframe_downsample(frames, cfg.m), cfg.k)
    tasks = [
        (c.a, c.b, K, provider, replace(ransac, seed=pair_seed(ransac.seed, *c.key)))
        for c in candidates
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_evaluate_task, tasks))
    else:
        results = [_evaluate_task(t) for t in tasks]
    for c, r in zip(candidates, results):
        c.pose, c.mean_trans_flow, c.inlier_count, c.inliers = r.pose, r.mean_trans_flow, r.inlier_count, r.inliers
        if r.pose is None:
            c.resolve(PairStatus.REJECTED_NO_POSE, r.reason)
        logger.info("pair %s: flow=%s inliers=%d %s", c.key, r.mean_trans_flow, r.inlier_count, r.reason)
    select_pairs(candidates, cfg)
    return candidates
