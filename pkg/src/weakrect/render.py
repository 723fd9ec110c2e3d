"""Ray-cast renderer for a textured box room, used to make synthetic sequences.

World coordinates follow the camera convention of the first frame: x right,
y down, z forward.  The camera sits inside an axis-aligned room whose walls,
floor and ceiling carry seeded value-noise texture.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import CameraIntrinsics


@dataclass(frozen=True)
class RoomScene:
    """Axis-aligned room ``[x0, x1] x [y0, y1] x [z0, z1]`` with noise texture."""

    seed: int = 0
    bounds: tuple[float, float, float, float, float, float] = (-3.0, 3.0, -1.6, 1.6, -1.0, 6.0)
    base_frequency: float = 1.5  # noise cells per unit length at the coarsest octave
    octaves: int = 5
    contrast: float = 4.0

    def planes(self) -> list[tuple[int, float]]:
        """(axis, offset) for each of the six faces."""
        x0, x1, y0, y1, z0, z1 = self.bounds
        return [(0, x0), (0, x1), (1, y0), (1, y1), (2, z0), (2, z1)]


class _ValueNoise:
    def __init__(self, seed: int):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(256)
        values = rng.uniform(0.0, 1.0, 256)
        i, j = np.meshgrid(np.arange(256), np.arange(256), indexing="ij")
        # hashed lattice, flattened and padded by one row/column for the +1 neighbours
        table = values[perm[(perm[i] + j) & 255]]
        self.table = np.pad(table, ((0, 1), (0, 1)), mode="wrap").ravel()

    def _corners(self, i: np.ndarray, j: np.ndarray) -> tuple[np.ndarray, ...]:
        k = (i & 255) * 257 + (j & 255)
        t = self.table
        return t[k], t[k + 257], t[k + 1], t[k + 258]

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ia, ib = np.floor(a), np.floor(b)
        fa, fb = a - ia, b - ib
        ia, ib = ia.astype(np.int64), ib.astype(np.int64)
        sa = fa * fa * (3.0 - 2.0 * fa)
        sb = fb * fb * (3.0 - 2.0 * fb)
        v00, v10, v01, v11 = self._corners(ia, ib)
        top = v00 + (v10 - v00) * sa
        bottom = v01 + (v11 - v01) * sa
        return top + (bottom - top) * sb


@lru_cache(maxsize=64)
def _noise(seed: int) -> _ValueNoise:
    return _ValueNoise(seed)


def _texture(scene: RoomScene, face: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    noise = _noise(scene.seed * 7 + face)
    total = np.zeros_like(a)
    amplitude, norm = 1.0, 0.0
    freq = scene.base_frequency
    for octave in range(scene.octaves):
        offset = 17.0 * octave + 3.1 * face
        total += amplitude * noise(a * freq + offset, b * freq - offset)
        norm += amplitude
        amplitude *= 0.6
        freq *= 2.0
    total /= norm
    return 0.5 + 0.45 * np.tanh(scene.contrast * (total - 0.5))


def _cast(
    scene: RoomScene, origin: np.ndarray, dirs: np.ndarray, with_shade: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit parameter and shade for world-space rays ``origin + s * dirs``."""
    planes = scene.planes()
    best = np.full(len(dirs), np.inf)
    which = np.full(len(dirs), -1)
    for face, (axis, offset) in enumerate(planes):
        comp = dirs[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (offset - origin[axis]) / comp
        hit = (np.abs(comp) > 1e-12) & (s > 1e-9) & (s < best)
        best[hit] = s[hit]
        which[hit] = face
    shade = np.zeros(len(dirs))
    if not with_shade:
        return best, shade
    for face, (axis, _) in enumerate(planes):
        sel = which == face
        if not np.any(sel):
            continue
        pts = origin + best[sel, None] * dirs[sel]
        a_axis, b_axis = [k for k in range(3) if k != axis]
        shade[sel] = _texture(scene, face, pts[:, a_axis], pts[:, b_axis])
    return best, shade


def render_view(
    scene: RoomScene,
    K: CameraIntrinsics,
    pose: np.ndarray,
    size: tuple[int, int],
    supersample: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """Gray image in [0, 1] and z-depth for a world-from-camera ``pose``.

    Each pixel averages ``supersample**2`` rays; depth comes from the pixel-centre ray.
    """
    w, h = size
    pose = np.asarray(pose, dtype=np.float64)
    R, c = pose[:3, :3], pose[:3, 3]
    x0, x1, y0, y1, z0, z1 = scene.bounds
    if not (x0 < c[0] < x1 and y0 < c[1] < y1 and z0 < c[2] < z1):
        raise ValueError("camera centre must lie inside the room")

    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    centre = np.stack([u.ravel(), v.ravel()], axis=1)
    rays = K.normalize(centre)  # camera z = 1, so the hit parameter is the z-depth
    depth, _ = _cast(scene, c, rays @ R.T, with_shade=False)

    n = supersample
    offsets = (np.arange(n) + 0.5) / n - 0.5
    image = np.zeros(len(centre))
    for dy in offsets:
        for dx in offsets:
            _, shade = _cast(scene, c, K.normalize(centre + [dx, dy]) @ R.T)
            image += shade
    image /= n * n
    return image.reshape(h, w), depth.reshape(h, w)
