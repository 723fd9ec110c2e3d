"""Keypoints, descriptor matching and match filtering for an image pair.

Detection and description use OpenCV's SIFT (difference-of-Gaussians scale
space with gradient-orientation-histogram descriptors).  Anything callable as
``detector(image) -> Features`` can stand in for it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import cv2
import numpy as np

from .errors import DegenerateInputError

MIN_IMAGE_SIDE = 32
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class Keypoint:
    position: tuple[float, float]  # (u, v) px
    scale: float
    orientation: float  # radians
    response: float


@dataclass(frozen=True)
class Match:
    p1: tuple[float, float]
    p2: tuple[float, float]
    distance: float
    ratio: float
    index1: int = -1
    index2: int = -1


class Features(NamedTuple):
    keypoints: list[Keypoint]
    descriptors: np.ndarray  # (n, 128), rows unit norm

    @property
    def points(self) -> np.ndarray:
        if not self.keypoints:
            return np.zeros((0, 2))
        return np.array([k.position for k in self.keypoints], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.keypoints)


Detector = Callable[[np.ndarray], Features]


def to_gray(image: np.ndarray) -> np.ndarray:
    """Luminance in [0, 1] from a gray or RGB(A) array (uint8 or float in [0, 1])."""
    img = np.asarray(image)
    if img.dtype == np.uint8:
        img = img.astype(np.float64) / 255.0
    else:
        img = img.astype(np.float64)
    if img.ndim == 3:
        img = img[..., :3] @ LUMA
    if img.ndim != 2:
        raise ValueError(f"expected a 2D or HxWxC image, got shape {np.shape(image)}")
    return img


@dataclass(frozen=True)
class SiftDetector:
    """DoG keypoints with 128-D SIFT descriptors.

    OpenCV chooses the octave count from the image size; ``scales_per_octave``,
    the contrast and edge thresholds and ``sigma`` are passed through.
    """

    max_features: int = 2000
    scales_per_octave: int = 3
    contrast_threshold: float = 0.03
    edge_threshold: float = 10.0
    sigma: float = 1.6

    def __call__(self, image: np.ndarray) -> Features:
        gray = to_gray(image)
        h, w = gray.shape
        if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
            raise DegenerateInputError(f"image {w}x{h} is smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")
        img8 = np.clip(np.rint(gray * 255.0), 0, 255).astype(np.uint8)
        sift = cv2.SIFT_create(
            nfeatures=0,
            nOctaveLayers=self.scales_per_octave,
            contrastThreshold=self.contrast_threshold,
            edgeThreshold=self.edge_threshold,
            sigma=self.sigma,
        )
        kps, desc = sift.detectAndCompute(img8, None)
        if not kps:
            return Features([], np.zeros((0, 128)))
        desc = np.asarray(desc, dtype=np.float64)
        norms = np.linalg.norm(desc, axis=1)
        keep = np.flatnonzero(norms > 0)
        # strongest first; position breaks ties so the order is reproducible
        keep = sorted(keep, key=lambda i: (-kps[i].response, kps[i].pt[0], kps[i].pt[1], kps[i].angle))
        keep = keep[: self.max_features]
        keypoints = [
            Keypoint(
                (float(kps[i].pt[0]), float(kps[i].pt[1])),
                float(kps[i].size),
                float(np.deg2rad(kps[i].angle)),
                float(kps[i].response),
            )
            for i in keep
        ]
        descriptors = desc[keep] / norms[keep, None]
        return Features(keypoints, descriptors)


def detect_and_describe(image: np.ndarray, max_features: int = 2000) -> Features:
    return SiftDetector(max_features=max_features)(image)


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(sq, 0.0))


def match_ratio_test(a: Features, b: Features, ratio_max: float = 0.8) -> list[Match]:
    """Nearest-neighbour matches passing the ratio test and a mutual-best check."""
    if len(a) == 0 or len(b) < 2:
        return []
    D = _pairwise_distances(a.descriptors, b.descriptors)
    nn = np.argpartition(D, 1, axis=1)[:, :2]
    d_two = np.take_along_axis(D, nn, axis=1)
    first = np.argmin(d_two, axis=1)
    best = nn[np.arange(len(nn)), first]
    d1 = d_two[np.arange(len(nn)), first]
    d2 = d_two[np.arange(len(nn)), 1 - first]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d2 > 0, d1 / d2, 1.0)
    back = np.argmin(D, axis=0)
    mutual = back[best] == np.arange(len(best))
    keep = np.flatnonzero((ratio < ratio_max) & mutual)
    pa, pb = a.points, b.points
    return [
        Match(tuple(pa[i]), tuple(pb[best[i]]), float(d1[i]), float(min(ratio[i], 1.0)), int(i), int(best[i]))
        for i in keep
    ]


def match_arrays(matches: Sequence[Match]) -> tuple[np.ndarray, np.ndarray]:
    if not matches:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return (
        np.array([m.p1 for m in matches], dtype=np.float64),
        np.array([m.p2 for m in matches], dtype=np.float64),
    )


def _cells(pts: np.ndarray, dims: tuple[int, int], grid: int, shift: tuple[float, float]) -> tuple[np.ndarray, int]:
    # shifted grids get one extra row/column so every point lands somewhere
    w, h = dims
    cols = grid + (1 if shift[0] else 0)
    rows = grid + (1 if shift[1] else 0)
    cx = np.clip(np.floor((pts[:, 0] + 0.5) / w * grid + shift[0]).astype(int), 0, cols - 1)
    cy = np.clip(np.floor((pts[:, 1] + 0.5) / h * grid + shift[1]).astype(int), 0, rows - 1)
    return cy * cols + cx, cols


def gms_inlier_mask(
    pts1: np.ndarray,
    pts2: np.ndarray,
    dims1: tuple[int, int],
    dims2: tuple[int, int],
    grid: int = 20,
    alpha: float = 6.0,
) -> np.ndarray:
    """Grid-based motion statistics over four half-cell-shifted grids of image 1.

    For each cell of image 1 the most popular destination cell in image 2 defines
    its motion.  The support of that cell pair is the number of matches joining
    the 3x3 neighbourhoods in the same relative arrangement; it must exceed
    ``alpha * sqrt(mean matches per cell over the paired neighbourhood)``.
    """
    n = len(pts1)
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    cell2, cols2 = _cells(pts2, dims2, grid, (0.0, 0.0))
    rows2 = grid
    for shift in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]:
        cell1, cols1 = _cells(pts1, dims1, grid, shift)
        rows1 = grid + (1 if shift[1] else 0)
        n1 = rows1 * cols1
        counts = np.zeros((n1, rows2 * cols2), dtype=np.int64)
        np.add.at(counts, (cell1, cell2), 1)
        per_cell = counts.sum(axis=1)
        target = np.argmax(counts, axis=1)

        r1, c1 = np.divmod(np.arange(n1), cols1)
        r2, c2 = np.divmod(target, cols2)
        score = np.zeros(n1)
        population = np.zeros(n1)
        valid = np.zeros(n1)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr1, cc1, rr2, cc2 = r1 + dr, c1 + dc, r2 + dr, c2 + dc
                ok1 = (rr1 >= 0) & (rr1 < rows1) & (cc1 >= 0) & (cc1 < cols1)
                ok2 = ok1 & (rr2 >= 0) & (rr2 < rows2) & (cc2 >= 0) & (cc2 < cols2)
                src = np.where(ok1, rr1 * cols1 + cc1, 0)
                dst = np.where(ok2, rr2 * cols2 + cc2, 0)
                population += np.where(ok2, per_cell[src], 0)
                score += np.where(ok2, counts[src, dst], 0)
                valid += ok2
        threshold = alpha * np.sqrt(population / np.maximum(valid, 1))
        good_cell = (per_cell > 0) & (score > threshold)
        keep |= good_cell[cell1] & (cell2 == target[cell1])
    return keep


def gms_filter(
    matches: Sequence[Match],
    dims1: tuple[int, int],
    dims2: tuple[int, int],
    grid: int = 20,
    alpha: float = 6.0,
) -> list[Match]:
    """Matches supported by coherent neighbourhood motion; a subset of the input."""
    if not matches:
        return []
    pts1, pts2 = match_arrays(matches)
    mask = gms_inlier_mask(pts1, pts2, dims1, dims2, grid, alpha)
    return [m for m, k in zip(matches, mask) if k]


@dataclass(frozen=True)
class MatchingConfig:
    ratio_max: float = 0.8
    gms_grid: int = 20
    gms_alpha: float = 6.0
    use_gms: bool = True
    max_features: int = 2000

    def __post_init__(self) -> None:
        if not 0.0 <= self.ratio_max <= 1.0:
            raise ValueError("ratio_max must lie in [0, 1]")
        if self.gms_grid < 1 or self.gms_alpha <= 0:
            raise ValueError("GMS grid and alpha must be positive")
        if self.max_features < 5:
            raise ValueError("max_features must be at least 5")


def match_images(
    img1: np.ndarray,
    img2: np.ndarray,
    cfg: MatchingConfig = MatchingConfig(),
    detector: Detector | None = None,
) -> list[Match]:
    """Detect, describe, ratio-test and (optionally) GMS-filter one image pair."""
    detect = detector or SiftDetector(max_features=cfg.max_features)
    f1, f2 = detect(img1), detect(img2)
    matches = match_ratio_test(f1, f2, cfg.ratio_max)
    if cfg.use_gms and matches:
        dims1 = (np.shape(img1)[1], np.shape(img1)[0])
        dims2 = (np.shape(img2)[1], np.shape(img2)[0])
        matches = gms_filter(matches, dims1, dims2, cfg.gms_grid, cfg.gms_alpha)
    return matches
