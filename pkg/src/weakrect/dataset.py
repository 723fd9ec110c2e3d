"""Synthetic sequences on disk and the ground-truth directory layout.

A sequence directory holds::

    frames/000000.png ...   8-bit gray renders
    depth/000000.npy ...    z-depth per pixel (0 = invalid)
    poses.txt               world-from-camera 3x4 per line
    intrinsics.txt          fx fy cx cy
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fileio import list_images, read_intrinsics, read_poses, save_png, write_intrinsics, write_json_atomic, write_poses
from .geometry import CameraIntrinsics, rodrigues_to_matrix
from .pairing import FrameRef
from .render import RoomScene, render_view
from .synthetic import GroundTruthFrame, pose_matrix


@dataclass(frozen=True)
class SequenceSpec:
    """A camera drifting through a textured room.

    ``step`` is the camera-centre travel per frame; the orientation wobbles
    sinusoidally with peak ``rotation_amplitude_deg`` about each axis.
    """

    frames: int = 25
    width: int = 640
    height: int = 480
    focal: float = 320.0
    step: float = 0.025
    rotation_amplitude_deg: float = 1.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.frames < 1:
            raise ConfigError("need at least one frame")
        if self.width < 32 or self.height < 32:
            raise ConfigError("frames must be at least 32x32")
        if self.focal <= 0:
            raise ConfigError("focal length must be positive")
        if self.step < 0 or self.rotation_amplitude_deg < 0:
            raise ConfigError("step and rotation amplitude cannot be negative")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal, self.focal, self.width / 2.0, self.height / 2.0)


def trajectory(spec: SequenceSpec) -> list[np.ndarray]:
    """World-from-camera poses; the seed sets the phases of the wobble."""
    phase = np.random.default_rng(spec.seed).uniform(0.0, 2.0 * np.pi, 3)
    rates = np.array([0.21, 0.13, 0.29])
    weights = np.array([1.0, 1.0, 0.3])
    direction = np.array([1.0, 0.1, 0.3]) / np.linalg.norm([1.0, 0.1, 0.3])
    start = np.array([-0.3, 0.0, 0.0])
    amp = np.deg2rad(spec.rotation_amplitude_deg)
    poses = []
    for i in range(spec.frames):
        r = amp * weights * np.sin(rates * i + phase)
        poses.append(pose_matrix(rodrigues_to_matrix(r), start + i * spec.step * direction))
    return poses


def _render_frame(task: tuple[str, SequenceSpec, np.ndarray, int]) -> None:
    out, spec, pose, i = task
    image, depth = render_view(RoomScene(seed=spec.seed), spec.intrinsics, pose, (spec.width, spec.height))
    save_png(Path(out) / "frames" / f"{i:06d}.png", image)
    np.save(Path(out) / "depth" / f"{i:06d}.npy", depth.astype(np.float32))


def write_sequence(out_dir: str | os.PathLike, spec: SequenceSpec = SequenceSpec(), jobs: int = 1) -> Path:
    """Render every frame (in ``jobs`` processes) and write the ground truth alongside."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "depth").mkdir(exist_ok=True)
    poses = trajectory(spec)
    tasks = [(str(out), spec, pose, i) for i, pose in enumerate(poses)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            list(pool.map(_render_frame, tasks))
    else:
        for task in tasks:
            _render_frame(task)
    write_poses(out / "poses.txt", poses)
    write_intrinsics(out / "intrinsics.txt", spec.intrinsics)
    write_json_atomic(out / "sequence.json", asdict(spec))
    return out


def frame_dir(root: str | os.PathLike) -> Path:
    """``root/frames`` when present, else ``root`` itself."""
    root = Path(root)
    return root / "frames" if (root / "frames").is_dir() else root


def list_frames(root: str | os.PathLike) -> list[FrameRef]:
    """Frames of a sequence directory, indexed by their sorted position."""
    return [FrameRef(i, str(p)) for i, p in enumerate(list_images(frame_dir(root)))]


@dataclass
class GroundTruthSequence:
    root: Path
    intrinsics: CameraIntrinsics
    poses: list[np.ndarray]
    depth_files: list[Path]

    def frame(self, i: int) -> GroundTruthFrame:
        depth = np.load(self.depth_files[i]).astype(np.float64)
        return GroundTruthFrame(depth, self.poses[i])

    def __len__(self) -> int:
        return len(self.poses)


def load_ground_truth(root: str | os.PathLike) -> GroundTruthSequence:
    """Depth maps (``depth/*.npy``), poses and intrinsics of a sequence directory."""
    root = Path(root)
    for needed in ("poses.txt", "intrinsics.txt", "depth"):
        if not (root / needed).exists():
            raise ConfigError(f"ground truth is missing {root / needed}")
    depth_files = sorted((root / "depth").glob("*.npy"))
    poses = read_poses(root / "poses.txt")
    if not depth_files or len(depth_files) != len(poses):
        raise ConfigError(f"{len(depth_files)} depth maps for {len(poses)} poses in {root}")
    return GroundTruthSequence(root, read_intrinsics(root / "intrinsics.txt"), poses, depth_files)
