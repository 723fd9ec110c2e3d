"""Reading and writing images, intrinsics, poses and JSON documents."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from .correspondence import to_gray
from .errors import ConfigError
from .geometry import CameraIntrinsics

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def list_images(directory: str | os.PathLike) -> list[Path]:
    """Image files of a directory in lexicographic order."""
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def load_image(path: str | os.PathLike) -> np.ndarray:
    """8-bit gray (h, w) or RGB (h, w, 3) array."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im).copy()


def load_gray(path: str | os.PathLike) -> np.ndarray:
    return to_gray(load_image(path))


def to_uint8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_png(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write gray/RGB as 8-bit PNG; float images are taken to be in [0, 1]."""
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def save_mask_png(path: str | os.PathLike, mask: np.ndarray) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool)).convert("1").save(path, format="PNG")


def load_mask_png(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 0


def read_intrinsics(path: str | os.PathLike) -> CameraIntrinsics:
    """``fx fy cx cy`` as four numbers in a text file, or a JSON object with those keys."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read intrinsics {p}: {exc}") from exc
    try:
        if text.lstrip().startswith("{"):
            obj = json.loads(text)
            values = [obj[key] for key in ("fx", "fy", "cx", "cy")]
        else:
            values = text.split()
            if len(values) != 4:
                raise ValueError(f"expected 4 numbers, found {len(values)}")
        return CameraIntrinsics(*(float(v) for v in values))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed intrinsics {p}: {exc}") from exc


def write_intrinsics(path: str | os.PathLike, K: CameraIntrinsics) -> None:
    Path(path).write_text(f"{K.fx!r} {K.fy!r} {K.cx!r} {K.cy!r}\n", encoding="utf-8")


def read_poses(path: str | os.PathLike) -> list[np.ndarray]:
    """World-from-camera poses, one row-major 3x4 matrix (12 numbers) per line."""
    poses = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read poses {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            values = np.array([float(v) for v in line.split()])
        except ValueError as exc:
            raise ConfigError(f"{path}:{n}: {exc}") from exc
        if values.size != 12:
            raise ConfigError(f"{path}:{n}: expected 12 numbers, found {values.size}")
        T = np.eye(4)
        T[:3] = values.reshape(3, 4)
        poses.append(T)
    return poses


def write_poses(path: str | os.PathLike, poses: list[np.ndarray]) -> None:
    lines = [" ".join(repr(float(v)) for v in np.asarray(T)[:3].ravel()) for T in poses]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_text_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory and rename over the target."""
    p = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{p.name}.", suffix=".tmp", dir=p.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, 0o644)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path: str | os.PathLike, obj: Any) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2) + "\n")


def read_json(path: str | os.PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
