"""The per-sequence manifest: every candidate pair, its outcome and its rectified outputs.

Stored as JSON with ``"version": "1"``.  File paths inside are relative to the
manifest's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .fileio import read_json, write_json_atomic
from .geometry import CameraIntrinsics
from .pairing import FrameRef, PairCandidate, PairStatus
from .pose import RelativePose

FORMAT_VERSION = "1"
POSE_CONVENTION = "X2 = R X1 + t (first camera to second); frame poses are world-from-camera"


def frame_record(f: FrameRef) -> dict[str, Any]:
    rec: dict[str, Any] = {"index": f.index, "path": f.path}
    if f.timestamp is not None:
        rec["timestamp"] = f.timestamp
    return rec


def pair_record(c: PairCandidate, matches_path: str | None = None) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "a": frame_record(c.a),
        "b": frame_record(c.b),
        "status": c.status.value,
        "reason": c.reason,
        "inlier_count": c.inlier_count,
        "mean_trans_flow": c.mean_trans_flow,
        "pose": None,
        "matches": matches_path,
    }
    if c.pose is not None:
        rec["pose"] = {
            "rotation": c.pose.rotation.tolist(),
            "translation": c.pose.translation.tolist(),
            "near_pure_rotation": c.pose.near_pure_rotation,
        }
    return rec


def candidate_from_record(rec: dict[str, Any]) -> PairCandidate:
    a, b = FrameRef(**rec["a"]), FrameRef(**rec["b"])
    pose = None
    if rec.get("pose"):
        p = rec["pose"]
        pose = RelativePose(
            np.array(p["rotation"]), np.array(p["translation"]),
            inlier_count=rec["inlier_count"], near_pure_rotation=p["near_pure_rotation"],
        )
    return PairCandidate(
        a, b, pose, rec.get("mean_trans_flow"), rec.get("inlier_count", 0), PairStatus(rec["status"]), rec.get("reason", "")
    )


@dataclass
class SequenceManifest:
    source_dir: str
    resolution: tuple[int, int]
    intrinsics: CameraIntrinsics
    config: dict[str, Any]
    frames: list[dict[str, Any]] = field(default_factory=list)
    pairs: list[dict[str, Any]] = field(default_factory=list)
    rectified: list[dict[str, Any]] = field(default_factory=list)
    version: str = FORMAT_VERSION
    pose_convention: str = POSE_CONVENTION

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "pose_convention": self.pose_convention,
            "source_dir": self.source_dir,
            "resolution": list(self.resolution),
            "intrinsics": self.intrinsics.as_dict(),
            "config": self.config,
            "frames": self.frames,
            "pairs": self.pairs,
            "rectified": self.rectified,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SequenceManifest":
        if d.get("version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported manifest version {d.get('version')!r}")
        try:
            return cls(
                source_dir=d["source_dir"],
                resolution=tuple(d["resolution"]),
                intrinsics=CameraIntrinsics(**d["intrinsics"]),
                config=d["config"],
                frames=d["frames"],
                pairs=d["pairs"],
                rectified=d["rectified"],
                version=d["version"],
                pose_convention=d.get("pose_convention", POSE_CONVENTION),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed manifest: {exc}") from exc

    def candidates(self) -> list[PairCandidate]:
        return [candidate_from_record(r) for r in self.pairs]

    def accepted(self) -> list[dict[str, Any]]:
        return [r for r in self.pairs if r["status"] == PairStatus.ACCEPTED.value]


def save_manifest(path: str | os.PathLike, manifest: SequenceManifest) -> None:
    write_json_atomic(path, manifest.to_dict())


def load_manifest(path: str | os.PathLike) -> SequenceManifest:
    data = read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path} is not a manifest")
    return SequenceManifest.from_dict(data)


def resolve(manifest_path: str | os.PathLike, relative: str) -> Path:
    return Path(manifest_path).parent / relative
