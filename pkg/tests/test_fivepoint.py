import numpy as np
import pytest

from weakrect.errors import DegenerateSampleError
from weakrect.fivepoint import essential_residuals, five_point_essential
from weakrect.geometry import rodrigues_to_matrix, skew


def make_sample(seed):
    rng = np.random.default_rng(seed)
    R = rodrigues_to_matrix(rng.normal(scale=0.2, size=3))
    t = rng.normal(size=3)
    t /= np.linalg.norm(t)
    X = np.column_stack([rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5), rng.uniform(2, 6, 5)])
    X2 = X @ R.T + t
    return R, t, X / X[:, 2:], X2 / X2[:, 2:]


def same_up_to_sign(A, B):
    A = A / np.linalg.norm(A)
    B = B / np.linalg.norm(B)
    return min(np.abs(A - B).max(), np.abs(A + B).max())


@pytest.mark.parametrize("seed", range(20))
def test_recovers_ground_truth(seed):
    R, t, x1, x2 = make_sample(seed)
    sols = five_point_essential(x1, x2)
    assert 1 <= len(sols) <= 10
    E_true = skew(t) @ R
    assert min(same_up_to_sign(E, E_true) for E in sols) < 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_every_candidate_is_consistent(seed):
    _, _, x1, x2 = make_sample(seed)
    for E in five_point_essential(x1, x2):
        epi, trace = essential_residuals(E, x1, x2)
        assert epi < 1e-8
        assert trace < 1e-8
        s = np.linalg.svd(E, compute_uv=False)
        assert abs(s[0] - s[1]) < 1e-6 * s[0]
        assert s[2] < 1e-6 * s[0]


def test_accepts_pixel_pairs_without_homogeneous_column():
    _, _, x1, x2 = make_sample(3)
    a = five_point_essential(x1[:, :2], x2[:, :2])
    b = five_point_essential(x1, x2)
    assert len(a) == len(b)


def test_identical_points_are_degenerate():
    x = np.tile([0.1, -0.2, 1.0], (5, 1))
    with pytest.raises(DegenerateSampleError):
        five_point_essential(x, x)


def test_wrong_count_rejected():
    with pytest.raises(ValueError):
        five_point_essential(np.ones((4, 3)), np.ones((4, 3)))


def test_nonfinite_is_degenerate():
    _, _, x1, x2 = make_sample(0)
    x1[0, 0] = np.nan
    with pytest.raises(DegenerateSampleError):
        five_point_essential(x1, x2)
