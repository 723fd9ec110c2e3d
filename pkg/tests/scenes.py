"""Rendered two-view fixtures shared by the test modules."""

import numpy as np

from weakrect.geometry import CameraIntrinsics, translational_flow
from weakrect.render import RoomScene, render_view
from weakrect.synthetic import invert_pose, pose_matrix

SIZE = (640, 480)
K_WIDE = CameraIntrinsics(320.0, 320.0, 320.0, 240.0)


def grid_pixels(size=SIZE, step=8):
    w, h = size
    u, v = np.meshgrid(np.arange(0.0, w, step), np.arange(0.0, h, step))
    return np.stack([u.ravel(), v.ravel()], axis=1)


def mean_flow(K, R, t, depth, step=8):
    """Mean translational flow (px) of a grid of first-view pixels with known depth."""
    pix = grid_pixels((depth.shape[1], depth.shape[0]), step)
    d = depth[pix[:, 1].astype(int), pix[:, 0].astype(int)]
    keep = d > 0
    return float(np.linalg.norm(translational_flow(K, R, t, d[keep], pix[keep]), axis=1).mean())


def render_pair(R, t, K=K_WIDE, size=SIZE, scene_seed=0, target_flow=None):
    """Render a first view at the room origin and a second view moved by ``X2 = R X1 + t``.

    With ``target_flow`` the translation keeps its direction and is rescaled so
    that the mean translational flow of the first view equals that many pixels.
    Returns ``(img1, img2, depth1, t)``.
    """
    scene = RoomScene(seed=scene_seed)
    img1, depth1 = render_view(scene, K, np.eye(4), size)
    t = np.asarray(t, dtype=np.float64)
    if target_flow is not None:
        t = t * (target_flow / mean_flow(K, R, t, depth1))
    img2, _ = render_view(scene, K, invert_pose(pose_matrix(R, t)), size)
    return img1, img2, depth1, t


class FlowProvider:
    """Noiseless correspondences whose mean translational flow is set per pair.

    Pair ``(a, b)`` gets a small rotation and a lateral translation scaled so the
    analytic mean translational flow of its points equals ``flows[a]`` pixels.
    """

    def __init__(self, flows, K=K_WIDE, n_points=200, seed=0):
        self.flows = list(flows)
        self.K = K
        self.n_points = n_points
        self.seed = seed

    def geometry(self, a):
        from weakrect.geometry import rodrigues_to_matrix

        rng = np.random.default_rng([self.seed, a])
        R = rodrigues_to_matrix(rng.normal(scale=0.02, size=3))
        direction = np.array([rng.normal(), rng.normal(), 0.0])
        pts1 = rng.uniform([20, 20], [620, 460], (self.n_points, 2))
        depth = rng.uniform(2.0, 6.0, self.n_points)
        unit = direction / np.linalg.norm(direction)
        flow = np.linalg.norm(translational_flow(self.K, R, unit, depth, pts1), axis=1).mean()
        return R, unit * (self.flows[a] / flow), pts1, depth

    def __call__(self, a, b):
        R, t, pts1, depth = self.geometry(a.index)
        X2 = depth[:, None] * self.K.normalize(pts1) @ R.T + t
        return pts1, self.K.project(X2)
