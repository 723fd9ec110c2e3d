"""Minimal five-point solver for the calibrated essential matrix.

The four-dimensional nullspace of the 5x9 epipolar system is combined as
``E = x X + y Y + z Z + W``.  Substituting into ``det(E) = 0`` and the nine
trace constraints ``2 E E^T E - tr(E E^T) E = 0`` gives ten cubics in
``(x, y, z)`` over 20 monomials.  Gauss-Jordan elimination of the ten cubic
monomials leaves a 10x10 action matrix for multiplication by ``x`` whose
eigenvectors carry the real solutions.
"""

from __future__ import annotations

from itertools import product

import numpy as np
from numpy.typing import ArrayLike

from .errors import DegenerateSampleError

# exponents (x, y, z); the first ten are eliminated, the last ten span the quotient
_CUBIC = [(3, 0, 0), (2, 1, 0), (2, 0, 1), (1, 2, 0), (1, 1, 1), (1, 0, 2), (0, 3, 0), (0, 2, 1), (0, 1, 2), (0, 0, 3)]
_BASIS = [(2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 0)]
_MONOMIALS = _CUBIC + _BASIS


def _fold_matrix() -> np.ndarray:
    # (slot_a, slot_b, slot_c) with slot 0/1/2/3 = x/y/z/1 -> monomial column
    index = {m: i for i, m in enumerate(_MONOMIALS)}
    fold = np.zeros((64, 20))
    for n, slots in enumerate(product(range(4), repeat=3)):
        exps = tuple(slots.count(v) for v in range(3))
        fold[n, index[exps]] = 1.0
    return fold


_FOLD = _fold_matrix()

_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_i, _k, _j] = -1.0

# action matrix rows that are read straight from the eliminated system
# x * (x^2, xy, xz, y^2, yz, z^2) -> cubic monomials 0..5
# x * (x, y, z, 1) -> basis monomials x^2, xy, xz, x
_ACTION_SHIFT = {6: 0, 7: 1, 8: 2, 9: 6}


_EXPONENTS = np.array(_MONOMIALS, dtype=np.int64)


def _monomials(xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Monomial values ``(n, 20)`` and gradients ``(n, 20, 3)`` at ``xyz`` of shape ``(n, 3)``."""
    pw = xyz[:, None, :] ** np.arange(4)[None, :, None]  # pw[n, k, v] = xyz[n, v] ** k
    ex, ey, ez = _EXPONENTS.T
    px, py, pz = pw[:, ex, 0], pw[:, ey, 1], pw[:, ez, 2]
    dx = ex * pw[:, np.maximum(ex - 1, 0), 0]
    dy = ey * pw[:, np.maximum(ey - 1, 0), 1]
    dz = ez * pw[:, np.maximum(ez - 1, 0), 2]
    grad = np.stack([dx * py * pz, px * dy * pz, px * py * dz], axis=2)
    return px * py * pz, grad


def _polish(A: np.ndarray, xyz: np.ndarray, steps: int = 2) -> np.ndarray:
    """Gauss-Newton refinement of all roots on the full cubic system."""
    for _ in range(steps):
        vals, grad = _monomials(xyz)
        F = vals @ A.T
        J = np.einsum("ij,njk->nik", A, grad)
        JtJ = np.einsum("nik,nil->nkl", J, J)
        JtF = np.einsum("nik,ni->nk", J, F)
        try:
            step = np.linalg.solve(JtJ, -JtF[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        ok = np.all(np.isfinite(step), axis=1)
        xyz = np.where(ok[:, None], xyz + np.where(ok[:, None], step, 0.0), xyz)
    return xyz


def epipolar_design(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Rows ``kron(x2, x1)`` so that ``row @ E.ravel() == x2^T E x1``."""
    return np.einsum("ni,nj->nij", x2, x1).reshape(len(x1), 9)


def constraint_matrix(nullspace: np.ndarray) -> np.ndarray:
    """10x20 coefficient matrix of the cubic constraints for a 4x9 nullspace."""
    E = nullspace.reshape(4, 3, 3).transpose(1, 2, 0)  # E[i, j, slot]
    EEt = np.einsum("ija,kjb->ikab", E, E)
    EEtE = np.einsum("ikab,klc->ilabc", EEt, E)
    trace = np.einsum("iiab->ab", EEt)
    trace_E = np.einsum("ab,ilc->ilabc", trace, E)
    cons = (2.0 * EEtE - trace_E).reshape(9, 64) @ _FOLD
    det = np.einsum("jkl,ja,kb,lc->abc", _LEVI, E[0], E[1], E[2]).reshape(1, 64) @ _FOLD
    return np.vstack([det, cons])


def _as_rays(pts: ArrayLike) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    if pts.shape == (5, 2):
        pts = np.hstack([pts, np.ones((5, 1))])
    if pts.shape != (5, 3):
        raise ValueError(f"expected 5 normalized points, got shape {pts.shape}")
    return pts


def five_point_essential(pts1: ArrayLike, pts2: ArrayLike) -> list[np.ndarray]:
    """All real essential matrices consistent with five calibrated correspondences.

    Points are normalized image coordinates (``K^-1`` applied), either ``(5, 2)``
    or homogeneous ``(5, 3)``.  Each returned matrix has unit Frobenius norm;
    there are at most ten.
    """
    x1, x2 = _as_rays(pts1), _as_rays(pts2)
    Q = epipolar_design(x1, x2)
    if not np.all(np.isfinite(Q)):
        raise DegenerateSampleError("non-finite input points")
    _, s, Vt = np.linalg.svd(Q)
    if s[0] == 0.0 or s[4] < 1e-10 * s[0]:
        raise DegenerateSampleError("epipolar system is rank deficient")
    null = Vt[5:]

    A = constraint_matrix(null)
    lead = A[:, :10]
    if np.linalg.cond(lead) > 1e13:
        raise DegenerateSampleError("constraint system cannot be eliminated")
    C = np.linalg.solve(lead, A[:, 10:])

    M = np.zeros((10, 10))
    M[:6] = -C[:6]
    for row, col in _ACTION_SHIFT.items():
        M[row, col] = 1.0

    eigvals, eigvecs = np.linalg.eig(M)
    roots = []
    for lam, vec in zip(eigvals, eigvecs.T):
        if abs(lam.imag) > 1e-8 * max(1.0, abs(lam.real)):
            continue
        if np.abs(vec.imag).max() > 1e-8 * np.abs(vec).max():
            continue
        vec = vec.real
        if abs(vec[9]) < 1e-12 * np.abs(vec).max():
            continue
        roots.append(vec[6:9] / vec[9])
    if not roots:
        return []
    roots = _polish(A, np.array(roots))
    coeffs = np.hstack([roots, np.ones((len(roots), 1))])
    solutions = []
    for e in coeffs @ null:
        E = e.reshape(3, 3)
        solutions.append(E / np.linalg.norm(E))
    return solutions


def essential_residuals(E: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> tuple[float, float]:
    """Max epipolar residual on the inputs and max trace-constraint residual."""
    E = E / np.linalg.norm(E)
    epi = np.abs(np.einsum("ni,ij,nj->n", x2, E, x1)).max()
    trace = np.abs(2.0 * E @ E.T @ E - np.trace(E @ E.T) * E).max()
    return float(epi), float(trace)
