import math

import numpy as np
import pytest

from scenes import K_WIDE, SIZE, render_pair
from weakrect.correspondence import match_arrays, match_images
from weakrect.errors import ExcessiveRotationError, NoOverlapError
from weakrect.geometry import (
    CameraIntrinsics,
    half_rotations,
    rodrigues_to_matrix,
    rotation_angle,
    rotation_to_homography,
    warp_rotational,
)
from weakrect.pose import RansacConfig, estimate_relative_pose
from weakrect.rectify import (
    Rect,
    ResampleSpec,
    compute_output_bounds,
    frame_corners,
    measure_residual_rotation,
    rectifying_homographies,
    update_intrinsics,
    warp_image,
    weak_rectify,
)
from weakrect.render import RoomScene, render_view

K = CameraIntrinsics(500.0, 500.0, 319.5, 239.5)


@pytest.fixture(scope="module")
def room():
    img, _ = render_view(RoomScene(1), K_WIDE, np.eye(4), SIZE)
    return img


def roll(deg):
    return rodrigues_to_matrix([0.0, 0.0, math.radians(deg)])


def inside_quad(quad, pts):
    """Pixel centres on the inner side of all four edges of a clockwise (image axes) quad."""
    ok = np.ones(len(pts), dtype=bool)
    for a, b in zip(quad, np.roll(quad, -1, axis=0)):
        edge, rel = b - a, pts - a
        ok &= edge[0] * rel[:, 1] - edge[1] * rel[:, 0] >= -1e-9
    return ok


def rect_pixels(r):
    u, v = np.meshgrid(np.arange(r.x, r.x + r.w, dtype=float), np.arange(r.y, r.y + r.h, dtype=float))
    return np.stack([u.ravel(), v.ravel()], axis=1)


class TestOutputBounds:
    def test_identity_is_full_frame(self):
        assert compute_output_bounds(np.eye(3), np.eye(3), (640, 480)) == Rect(0, 0, 640, 480)

    def test_roll_matches_corner_oracle(self):
        H1, H2 = (rotation_to_homography(K, roll(s)) for s in (1.0, -1.0))
        boxes = []
        quads = []
        for H in (H1, H2):
            quad = []
            for u, v in [(0, 0), (639, 0), (639, 479), (0, 479)]:
                x = H @ np.array([u, v, 1.0])
                quad.append(x[:2] / x[2])
            quad = np.array(quad)
            quads.append(quad)
            boxes.append((max(quad[0, 0], quad[3, 0]), max(quad[0, 1], quad[1, 1]),
                          min(quad[1, 0], quad[2, 0]), min(quad[2, 1], quad[3, 1])))
        xmin = math.ceil(max(b[0] for b in boxes))
        ymin = math.ceil(max(b[1] for b in boxes))
        xmax = math.floor(min(b[2] for b in boxes))
        ymax = math.floor(min(b[3] for b in boxes))
        crop = compute_output_bounds(H1, H2, (640, 480))
        assert crop == Rect(xmin, ymin, xmax - xmin + 1, ymax - ymin + 1)
        pix = rect_pixels(crop)
        for quad in quads:
            assert inside_quad(quad, pix).all()

    def test_opposing_sixty_degrees(self):
        Ry = lambda d: rodrigues_to_matrix([0.0, math.radians(d), 0.0])
        H1, H2 = (rotation_to_homography(K, Ry(s)) for s in (60.0, -60.0))
        with pytest.raises(NoOverlapError):
            compute_output_bounds(H1, H2, (640, 480))

    def test_disjoint_translations(self):
        T = lambda dx: np.array([[1.0, 0, dx], [0, 1.0, 0], [0, 0, 1.0]])
        with pytest.raises(NoOverlapError):
            compute_output_bounds(T(-400.0), T(400.0), (640, 480))

    def test_bounded_for_modest_rotations(self):
        rng = np.random.default_rng(0)
        diag = math.hypot(640, 480)
        for _ in range(100):
            axis = rng.normal(size=3)
            R = rodrigues_to_matrix(axis / np.linalg.norm(axis) * math.radians(rng.uniform(0, 10)))
            crop = compute_output_bounds(*rectifying_homographies(K, R), (640, 480))
            assert 0 < crop.w <= 2 * diag and 0 < crop.h <= 2 * diag

    def test_swap_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            R = rodrigues_to_matrix(rng.normal(scale=0.05, size=3))
            a = compute_output_bounds(*rectifying_homographies(K, R), (640, 480))
            b = compute_output_bounds(*rectifying_homographies(K, R.T), (640, 480))
            assert abs(a.w - b.w) <= 1 and abs(a.h - b.h) <= 1

    def test_corners(self):
        np.testing.assert_array_equal(frame_corners((4, 3)), [[0, 0], [3, 0], [3, 2], [0, 2]])


class TestWarpImage:
    def test_identity_full_frame(self, room):
        out = warp_image(room, np.eye(3), Rect(0, 0, 640, 480))
        np.testing.assert_array_equal(out.image, room)
        assert out.valid.all()

    def test_integer_translation_is_exact(self, room):
        H = np.array([[1.0, 0, 2.0], [0, 1.0, 0], [0, 0, 1.0]])
        out = warp_image(room, H, Rect(0, 0, 640, 480))
        np.testing.assert_array_equal(out.image[:, 2:], room[:, :-2])
        assert not out.valid[:, :2].any() and out.valid[:, 2:].all()

    def test_preserves_integer_dtype(self, room):
        img8 = np.rint(room * 255).astype(np.uint8)
        out = warp_image(img8, np.eye(3), Rect(0, 0, 640, 480))
        assert out.image.dtype == np.uint8
        np.testing.assert_array_equal(out.image, img8)

    def test_color_per_channel(self, room):
        rgb = np.stack([room, 1 - room, 0.5 * room], axis=-1)
        H = rotation_to_homography(K_WIDE, roll(3.0))
        out = warp_image(rgb, H, Rect(0, 0, 640, 480))
        gray = warp_image(room, H, Rect(0, 0, 640, 480))
        np.testing.assert_allclose(out.image[..., 0], gray.image, atol=1e-12)
        np.testing.assert_allclose(out.image[..., 1][gray.valid], 1 - gray.image[gray.valid], atol=1e-12)

    def test_fill_value(self, room):
        H = np.array([[1.0, 0, 5.0], [0, 1.0, 0], [0, 0, 1.0]])
        out = warp_image(room, H, Rect(0, 0, 640, 480), ResampleSpec(fill="constant", fill_value=0.25))
        assert np.all(out.image[:, :5] == 0.25)

    def test_roll_round_trip(self, room):
        H = rotation_to_homography(K_WIDE, roll(5.0))
        full = Rect(0, 0, 640, 480)
        there = warp_image(room, H, full)
        back = warp_image(there.image, np.linalg.inv(H), full)
        interior = np.zeros_like(back.valid)
        interior[60:-60, 80:-80] = True
        err = np.abs(back.image - room)[interior]
        assert err.mean() < 0.02

    def test_empty_bounds(self, room):
        with pytest.raises(ValueError):
            warp_image(room, np.eye(3), Rect(0, 0, 0, 10))

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            ResampleSpec(method="nearest")
        with pytest.raises(ValueError):
            ResampleSpec(fill="wrap")


class TestIntrinsicsUpdate:
    def test_origin_crop(self):
        assert update_intrinsics(K, Rect(0, 0, 640, 480)) == K

    def test_shift(self):
        Ko = update_intrinsics(K, Rect(13, 7, 600, 400))
        assert (Ko.fx, Ko.fy, Ko.cx, Ko.cy) == (K.fx, K.fy, K.cx - 13, K.cy - 7)

    def test_projection_oracle(self):
        R = rodrigues_to_matrix([0.03, -0.05, 0.02])
        R1, _ = half_rotations(R)
        H1, H2 = rectifying_homographies(K, R)
        crop = compute_output_bounds(H1, H2, (640, 480))
        Ko = update_intrinsics(K, crop)
        rng = np.random.default_rng(2)
        X = np.column_stack([rng.uniform(-1, 1, 50), rng.uniform(-1, 1, 50), rng.uniform(2, 6, 50)])
        warped = warp_rotational(H1, K.project(X)) - [crop.x, crop.y]
        np.testing.assert_allclose(Ko.project(X @ R1.T), warped, atol=1e-6)


class TestWeakRectify:
    def test_identity(self, room):
        pair = weak_rectify(room, room, K_WIDE, np.eye(3))
        np.testing.assert_array_equal(pair.H1, np.eye(3))
        np.testing.assert_array_equal(pair.H2, np.eye(3))
        np.testing.assert_array_equal(pair.img1, room)
        assert pair.crop == Rect(0, 0, 640, 480)
        assert pair.K_out == K_WIDE

    def test_homographies_cancel_rotation(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            R = rodrigues_to_matrix(rng.normal(scale=0.3, size=3))
            H1, H2 = rectifying_homographies(K, R)
            # a point at infinity seen in view 1 maps to the same common-plane pixel from both views
            composed = H2 @ rotation_to_homography(K, R) @ np.linalg.inv(H1)
            np.testing.assert_allclose(composed / composed[2, 2], np.eye(3), atol=1e-9)

    def test_translation_untouched(self):
        R = rodrigues_to_matrix([0.02, 0.04, -0.01])
        t = np.array([0.1, 0.08, 0.05])
        R1, R2 = half_rotations(R)
        # rectified relative motion: rotation gone, translation rotated into the common frame only
        np.testing.assert_allclose(R2 @ R @ R1.T, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(R2 @ t), np.linalg.norm(t), atol=1e-15)
        assert abs((R2 @ t)[1]) > 0.01  # vertical baseline survives, unlike 1-DoF stereo rectification

    def test_size_mismatch(self, room):
        with pytest.raises(ValueError):
            weak_rectify(room, room[:-1], K_WIDE, np.eye(3))

    def test_excessive_rotation(self, room):
        with pytest.raises(ExcessiveRotationError):
            weak_rectify(room, room, K_WIDE, rodrigues_to_matrix([0.0, math.radians(95.0), 0.0]))

    def test_pure_rotation_pair_becomes_identical(self):
        R = rodrigues_to_matrix(np.array([0.3, -0.5, 0.2]) / np.linalg.norm([0.3, -0.5, 0.2]) * math.radians(3.0))
        img1, img2, _, _ = render_pair(R, np.zeros(3))
        pair = weak_rectify(img1, img2, K_WIDE, R)
        both = pair.valid1 & pair.valid2
        assert both.mean() > 0.95
        assert np.abs(pair.img1 - pair.img2)[both].mean() < 0.01

    @pytest.mark.slow
    def test_rendered_pair_loses_its_rotation(self):
        axis = np.array([0.4, 0.8, -0.3]) / np.linalg.norm([0.4, 0.8, -0.3])
        R = rodrigues_to_matrix(axis * math.radians(3.0))
        img1, img2, _, _ = render_pair(R, np.array([0.1, 0.0, 0.05]))
        p1, p2 = match_arrays(match_images(img1, img2))
        pose, _ = estimate_relative_pose(p1, p2, K_WIDE, RansacConfig())
        pair = weak_rectify(img1, img2, K_WIDE, pose.rotation)
        assert measure_residual_rotation(pair) < 0.05
        assert pair.residual_rotation_deg is not None
        assert rotation_angle(pose.rotation) > math.radians(2.9)
