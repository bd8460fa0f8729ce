"""Convex-geometry kernel: an active-set nonnegative least squares solver,
the hull-membership residual test on the ones-augmented system, and the
projected purity test run on random low-dimensional feature masks.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import nnls_solve, purity_scan
from .errors import NonconvergenceError

DEFAULT_NNLS_TOL = 1e-10


@dataclass(frozen=True)
class NnlsSolution:
    weights: np.ndarray
    residual_norm: float
    iterations: int


def nnls(a, b, tol=DEFAULT_NNLS_TOL, max_iter=None):
    """Solve min ||a w - b||_2 subject to w >= 0 (Lawson-Hanson active set).

    At exit the KKT conditions hold at tol: the gradient of 0.5*||a w - b||^2
    is within tol of zero on coordinates with w_i > 0 and >= -tol on the
    rest. Hitting max_iter raises NonconvergenceError carrying the best
    iterate (default cap: 3n + 30 subproblem solves).
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64).ravel()
    if a.ndim != 2 or a.shape[0] != b.size:
        raise ValueError("a must be (m, n) with b of length m")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("nnls requires finite entries")
    if max_iter is None:
        max_iter = 3 * a.shape[1] + 30
    if int(max_iter) != max_iter or max_iter < 1:
        raise ValueError("max_iter must be a positive integer")
    w, iters, converged = nnls_solve(a, b, float(tol), int(max_iter))
    residual = float(np.linalg.norm(a @ w - b))
    if not converged:
        raise NonconvergenceError(
            f"nnls did not converge within {max_iter} iterations",
            weights=w, residual_norm=residual, iterations=int(iters),
        )
    return NnlsSolution(w, residual, int(iters))


def build_augmented_matrix(points):
    """Stack points as columns and append a row of ones, giving the
    (d+1) x n system whose nonnegative solutions are convex combinations."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
        raise ValueError("points must be a nonempty list of nonempty equal-length vectors")
    return np.vstack([pts.T, np.ones((1, pts.shape[0]))])


def hull_membership_test(candidate, set_points, eps=1e-6):
    """True iff the candidate lies in the convex hull of set_points, decided
    by the NNLS residual on the ones-augmented system being below
    eps * ||(candidate, 1)||_2."""
    candidate = np.asarray(candidate, dtype=np.float64).ravel()
    a = build_augmented_matrix(set_points)
    if candidate.size != a.shape[0] - 1:
        raise ValueError("candidate dimension does not match set points")
    bt = np.concatenate([candidate, [1.0]])
    sol = nnls(a, bt)
    return bool(sol.residual_norm < eps * np.linalg.norm(bt))


def _draw_masks(n_features, d, p_max, rng_seed):
    """Up to p_max distinct d-feature masks, seeded; never repeats a mask
    within one purity test."""
    total = math.comb(n_features, d)
    n_masks = min(p_max, total)
    rng = np.random.default_rng(rng_seed)
    seen = set()
    masks = []
    attempts = 0
    while len(masks) < n_masks and attempts < 1000 * n_masks:
        attempts += 1
        mask = tuple(sorted(rng.choice(n_features, size=d, replace=False).tolist()))
        if mask in seen:
            continue
        seen.add(mask)
        masks.append(np.asarray(mask, dtype=np.int64))
    return masks


def projected_purity_test(set_indices, class_label, train, d, p_max, eps_da, rng_seed):
    """Sound one-directional purity check for a same-class index set.

    Tries up to p_max random d-feature masks; returns True as soon as one
    mask is found under which no foreign-class training point passes the
    hull membership test against the projected set. A True answer certifies
    purity in the full feature space; False only means no certifying mask
    was found.
    """
    x = train.samples
    y = train.labels
    if y is None:
        raise ValueError("purity testing needs a labeled training set")
    set_indices = np.asarray(set_indices, dtype=np.int64)
    if set_indices.ndim != 1 or set_indices.size < 1:
        raise ValueError("set_indices must be a nonempty 1-D index list")
    if not np.all(y[set_indices] == class_label):
        raise ValueError(f"set_indices must all carry label {class_label}")
    if int(d) != d or d < 1 or d > x.shape[1]:
        raise ValueError("d must be a positive integer at most the feature count")
    if int(p_max) != p_max or p_max < 1:
        raise ValueError("p_max must be a positive integer")
    foreign = x[y != class_label]
    if foreign.shape[0] == 0:
        return True
    foreign_aug = np.ascontiguousarray(
        np.column_stack([foreign, np.ones(foreign.shape[0])])
    )
    nnls_tol = DEFAULT_NNLS_TOL
    nnls_cap = 3 * set_indices.size + 30
    for mask in _draw_masks(x.shape[1], int(d), int(p_max), rng_seed):
        a_aug = np.ascontiguousarray(
            np.vstack([x[np.ix_(set_indices, mask)].T, np.ones(set_indices.size)])
        )
        cols = np.concatenate([mask, [x.shape[1]]])  # projected coords + ones row
        f_aug = np.ascontiguousarray(foreign_aug[:, cols])
        code, idx = purity_scan(a_aug, f_aug, float(eps_da), nnls_tol, nnls_cap)
        if code == -1:
            raise NonconvergenceError(
                f"nnls did not converge while scanning foreign point {idx}"
            )
        if code == 0:
            return True
    return False
