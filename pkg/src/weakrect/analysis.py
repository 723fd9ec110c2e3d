"""Motion diagnostics: how much of the warping flow comes from rotation versus
translation, and how strongly depth errors disturb the warp.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import CameraIntrinsics, flow_magnitude, rotation_angle, warp_full, warp_rotational, rotation_to_homography
from .synthetic import GroundTruthFrame, relative_pose, synth_scene  # noqa: F401  (synth_scene re-exported)

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_RANGE = (0.5, 10.0)
STATS_COLUMNS = ("pair_id", "rot_deg", "trans_mag", "rot_flow_px", "trans_flow_px", "estimated")
CURVE_COLUMNS = ("eps", "mean_warp_err_px", "n_samples")


@dataclass
class MotionStats:
    """Per-sample flow magnitudes plus per-pair motion, with their means."""

    mean_rotation_deg: float
    mean_translation: float
    rot_flow_samples: list[float] = field(default_factory=list)
    trans_flow_samples: list[float] = field(default_factory=list)
    sample_pair: list[str] = field(default_factory=list)
    pair_ids: list[str] = field(default_factory=list)
    pair_rotation_deg: list[float] = field(default_factory=list)
    pair_translation: list[float] = field(default_factory=list)
    skipped_pairs: int = 0
    estimated: bool = False

    def __post_init__(self) -> None:
        if not len(self.rot_flow_samples) == len(self.trans_flow_samples) == len(self.sample_pair):
            raise ValueError("sample lists must have equal length")
        if any(v < 0 for v in self.rot_flow_samples) or any(v < 0 for v in self.trans_flow_samples):
            raise ValueError("flow magnitudes cannot be negative")


@dataclass
class SensitivityCurve:
    rel_depth_errors: list[float]
    warp_errors_px: list[float]
    n_samples: list[int]

    def __post_init__(self) -> None:
        if not len(self.rel_depth_errors) == len(self.warp_errors_px) == len(self.n_samples):
            raise ValueError("curve lists must have equal length")


def _sample_points(
    frame: GroundTruthFrame, count: int, rng: np.random.Generator, depth_range: tuple[float, float]
) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = depth_range
    v, u = np.nonzero((frame.depth >= lo) & (frame.depth <= hi))
    if len(u) == 0:
        return np.zeros((0, 2)), np.zeros(0)
    pick = np.sort(rng.choice(len(u), size=min(count, len(u)), replace=False))
    pts = np.stack([u[pick], v[pick]], axis=1).astype(np.float64)
    return pts, frame.depth[v[pick], u[pick]]


def _in_front(K: CameraIntrinsics, R: np.ndarray, t: np.ndarray, pts: np.ndarray, depth: np.ndarray) -> np.ndarray:
    Y = K.normalize(pts) @ R.T
    return depth * Y[:, 2] + t[2] > 0


def _pair_rng(seed: int, pair_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, pair_index]))


def motion_statistics(
    pairs: Sequence[tuple[GroundTruthFrame, GroundTruthFrame]],
    K: CameraIntrinsics,
    samples_per_pair: int = 1000,
    seed: int = 0,
    depth_range: tuple[float, float] = DEFAULT_DEPTH_RANGE,
    pair_ids: Sequence[str] | None = None,
) -> MotionStats:
    """Rotational and translational flow of sampled points, per ground-truth pair.

    Full flow comes from the depth-and-pose warp, rotational flow from the
    rotation-only homography, and translational flow is their difference.
    Pairs without valid depth are skipped and counted.
    """
    if samples_per_pair < 1:
        raise ValueError("samples_per_pair must be at least 1")
    ids = list(pair_ids) if pair_ids is not None else [str(i) for i in range(len(pairs))]
    stats = MotionStats(0.0, 0.0)
    for i, (fa, fb) in enumerate(pairs):
        R, t = relative_pose(fa.pose, fb.pose)
        pts, depth = _sample_points(fa, samples_per_pair, _pair_rng(seed, i), depth_range)
        keep = _in_front(K, R, t, pts, depth)
        pts, depth = pts[keep], depth[keep]
        if len(pts) == 0:
            stats.skipped_pairs += 1
            logger.warning("pair %s has no usable depth; skipped", ids[i])
            continue
        full, _ = warp_full(K, R, t, depth, pts)
        rot = warp_rotational(rotation_to_homography(K, R), pts)
        stats.rot_flow_samples.extend(flow_magnitude(pts, rot).tolist())
        stats.trans_flow_samples.extend(flow_magnitude(rot, full).tolist())
        stats.sample_pair.extend([ids[i]] * len(pts))
        stats.pair_ids.append(ids[i])
        stats.pair_rotation_deg.append(math.degrees(rotation_angle(R)))
        stats.pair_translation.append(float(np.linalg.norm(t)))
    if stats.pair_ids:
        stats.mean_rotation_deg = float(np.mean(stats.pair_rotation_deg))
        stats.mean_translation = float(np.mean(stats.pair_translation))
    return stats


def estimated_motion_statistics(
    pairs: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]],
    K: CameraIntrinsics,
    pair_ids: Sequence[str] | None = None,
) -> MotionStats:
    """Motion statistics from estimated rotations and inlier matches, without depth.

    ``pairs`` holds ``(R, pts1, pts2)``.  The translation scale is unknown, so
    translation magnitudes are NaN.
    """
    ids = list(pair_ids) if pair_ids is not None else [str(i) for i in range(len(pairs))]
    stats = MotionStats(0.0, math.nan, estimated=True)
    for pid, (R, pts1, pts2) in zip(ids, pairs):
        pts1, pts2 = np.asarray(pts1, dtype=np.float64), np.asarray(pts2, dtype=np.float64)
        if len(pts1) == 0:
            stats.skipped_pairs += 1
            continue
        rot = warp_rotational(rotation_to_homography(K, R), pts1)
        stats.rot_flow_samples.extend(flow_magnitude(pts1, rot).tolist())
        stats.trans_flow_samples.extend(flow_magnitude(rot, pts2).tolist())
        stats.sample_pair.extend([pid] * len(pts1))
        stats.pair_ids.append(pid)
        stats.pair_rotation_deg.append(math.degrees(rotation_angle(R)))
        stats.pair_translation.append(math.nan)
    if stats.pair_ids:
        stats.mean_rotation_deg = float(np.mean(stats.pair_rotation_deg))
    return stats


def depth_error_sensitivity(
    pairs: Sequence[tuple[GroundTruthFrame, GroundTruthFrame]] | tuple[GroundTruthFrame, GroundTruthFrame],
    K: CameraIntrinsics,
    eps_list: Sequence[float],
    samples: int = 1000,
    seed: int = 0,
    depth_range: tuple[float, float] = DEFAULT_DEPTH_RANGE,
) -> SensitivityCurve:
    """Mean pixel shift of the warp when sampled depths are scaled by ``1 + eps``.

    The same points are used for every ``eps``; samples whose perturbed depth
    would fall behind the second camera are dropped for that ``eps``.
    """
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], GroundTruthFrame):
        pairs = [pairs]
    drawn = []
    for i, (fa, fb) in enumerate(pairs):
        R, t = relative_pose(fa.pose, fb.pose)
        pts, depth = _sample_points(fa, samples, _pair_rng(seed, i), depth_range)
        keep = _in_front(K, R, t, pts, depth)
        drawn.append((R, t, pts[keep], depth[keep]))

    errors, counts = [], []
    for eps in eps_list:
        if eps <= -1.0:
            raise ValueError("relative depth error must exceed -1")
        total, n = 0.0, 0
        for R, t, pts, depth in drawn:
            ok = _in_front(K, R, t, pts, depth * (1.0 + eps))
            if not np.any(ok):
                continue
            ref, _ = warp_full(K, R, t, depth[ok], pts[ok])
            off, _ = warp_full(K, R, t, depth[ok] * (1.0 + eps), pts[ok])
            total += float(np.sum(flow_magnitude(ref, off)))
            n += int(ok.sum())
        errors.append(total / n if n else math.nan)
        counts.append(n)
    return SensitivityCurve([float(e) for e in eps_list], errors, counts)


# ---- tabular export -----------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.9g" % x


def export_stats(stats: MotionStats) -> str:
    """CSV with one row per sample and a final ``mean`` row; empty stats give only the header."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STATS_COLUMNS)
    if not stats.rot_flow_samples:
        return buf.getvalue()
    per_pair = {pid: (r, t) for pid, r, t in zip(stats.pair_ids, stats.pair_rotation_deg, stats.pair_translation)}
    flag = "true" if stats.estimated else "false"
    for pid, rf, tf in zip(stats.sample_pair, stats.rot_flow_samples, stats.trans_flow_samples):
        r, t = per_pair[pid]
        writer.writerow([pid, _fmt(r), _fmt(t), _fmt(rf), _fmt(tf), flag])
    writer.writerow([
        "mean",
        _fmt(stats.mean_rotation_deg),
        _fmt(stats.mean_translation),
        _fmt(float(np.mean(stats.rot_flow_samples))),
        _fmt(float(np.mean(stats.trans_flow_samples))),
        flag,
    ])
    return buf.getvalue()


def export_curve(curve: SensitivityCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for e, err, n in zip(curve.rel_depth_errors, curve.warp_errors_px, curve.n_samples):
        writer.writerow([_fmt(e), _fmt(err), n])
    return buf.getvalue()


def parse_stats(text: str) -> MotionStats:
    """Inverse of :func:`export_stats` (per-pair values are read back from the sample rows)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != STATS_COLUMNS:
        raise ValueError("not a motion statistics table")
    body = [r for r in rows[1:] if r and r[0] != "mean"]
    summary = [r for r in rows[1:] if r and r[0] == "mean"]
    stats = MotionStats(0.0, 0.0)
    for pid, r, t, rf, tf, flag in body:
        stats.sample_pair.append(pid)
        stats.rot_flow_samples.append(float(rf))
        stats.trans_flow_samples.append(float(tf))
        stats.estimated = flag == "true"
        if pid not in stats.pair_ids:
            stats.pair_ids.append(pid)
            stats.pair_rotation_deg.append(float(r))
            stats.pair_translation.append(float(t))
    if summary:
        stats.mean_rotation_deg = float(summary[0][1])
        stats.mean_translation = float(summary[0][2])
    return stats


def parse_curve(text: str) -> SensitivityCurve:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CURVE_COLUMNS:
        raise ValueError("not a sensitivity table")
    body = [r for r in rows[1:] if r]
    return SensitivityCurve([float(r[0]) for r in body], [float(r[1]) for r in body], [int(r[2]) for r in body])
