"""Hot numeric kernels: explicit reaction-diffusion stepping, nonnegative
least squares, and the foreign-point hull scan used by purity testing.

Each kernel exists in two variants: a numba ``@njit`` build and a pure
numpy/python build. The active variant is chosen at import time from the
``SIMCLASS_NUMBA`` environment variable ("0"/"false"/"off" forces the pure
path; anything else uses numba when importable). ``benchmarks/bench_kernels.py``
times both paths side by side.
"""

import os

import numpy as np

_flag = os.environ.get("SIMCLASS_NUMBA", "").strip().lower()
if _flag in ("0", "false", "off", "no"):
    NUMBA_ENABLED = False
else:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# explicit Euler reaction-diffusion stepping on a regular grid
# ---------------------------------------------------------------------------

def _diffusion_steps_py(u0, ny, nx, dt, nu, kappa, inv_dx2, inv_dy2, n_t):
    """Vectorized stepping of u' = nu*Lap(u) - kappa*u^3 with zero-gradient
    boundaries. Returns the n_t post-step fields, flattened row-major."""
    u = u0.reshape(ny, nx).copy()
    out = np.empty((n_t, ny * nx))
    for step in range(n_t):
        xl = np.empty_like(u)
        xl[:, 1:] = u[:, :-1]
        xl[:, 0] = u[:, 0]
        xr = np.empty_like(u)
        xr[:, :-1] = u[:, 1:]
        xr[:, -1] = u[:, -1]
        yl = np.empty_like(u)
        yl[1:, :] = u[:-1, :]
        yl[0, :] = u[0, :]
        yr = np.empty_like(u)
        yr[:-1, :] = u[1:, :]
        yr[-1, :] = u[-1, :]
        lap = (xl - 2.0 * u + xr) * inv_dx2 + (yl - 2.0 * u + yr) * inv_dy2
        u = u + dt * (nu * lap - kappa * (u * u * u))
        out[step, :] = u.ravel()
    return out


def _diffusion_steps_loop(u0, ny, nx, dt, nu, kappa, inv_dx2, inv_dy2, n_t):
    u = u0.reshape(ny, nx).copy()
    unew = np.empty_like(u)
    out = np.empty((n_t, ny * nx))
    for step in range(n_t):
        for iy in range(ny):
            ym = iy - 1 if iy > 0 else 0
            yp = iy + 1 if iy < ny - 1 else ny - 1
            for ix in range(nx):
                xm = ix - 1 if ix > 0 else 0
                xp = ix + 1 if ix < nx - 1 else nx - 1
                c = u[iy, ix]
                lap = (u[iy, xm] - 2.0 * c + u[iy, xp]) * inv_dx2 + (
                    u[ym, ix] - 2.0 * c + u[yp, ix]
                ) * inv_dy2
                unew[iy, ix] = c + dt * (nu * lap - kappa * (c * c * c))
        u, unew = unew, u
        out[step, :] = u.ravel()
    return out


# ---------------------------------------------------------------------------
# Lawson-Hanson active-set nonnegative least squares
# ---------------------------------------------------------------------------

def _nnls_impl(a, b, tol, max_iter):
    """min ||a w - b||_2 subject to w >= 0.

    Returns (w, iterations, converged). ``iterations`` counts least-squares
    subproblem solves. KKT at exit: the gradient of 0.5*||a w - b||^2 is
    within tol of zero on the passive set and >= -tol elsewhere.
    """
    m, n = a.shape
    w = np.zeros(n)
    passive = np.zeros(n, np.bool_)
    iters = 0
    while True:
        g = a.T @ (b - a @ w)
        best = -1
        best_g = tol
        for i in range(n):
            if not passive[i] and g[i] > best_g:
                best_g = g[i]
                best = i
        if best < 0:
            return w, iters, True
        passive[best] = True
        while True:
            if iters >= max_iter:
                return w, iters, False
            iters += 1
            k = 0
            for i in range(n):
                if passive[i]:
                    k += 1
            sub = np.empty((m, k))
            idx = np.empty(k, np.int64)
            c = 0
            for i in range(n):
                if passive[i]:
                    idx[c] = i
                    sub[:, c] = a[:, i]
                    c += 1
            z = np.linalg.lstsq(sub, b)[0]
            if z.min() > 0.0:
                w[:] = 0.0
                for c in range(k):
                    w[idx[c]] = z[c]
                break
            # step toward z until the first passive coordinate hits zero
            alpha = np.inf
            pivot = -1
            for c in range(k):
                if z[c] <= 0.0:
                    denom = w[idx[c]] - z[c]
                    if denom > 0.0:
                        ratio = w[idx[c]] / denom
                        if ratio < alpha:
                            alpha = ratio
                            pivot = c
            if pivot < 0:
                # all blocking coordinates already at zero: drop them
                for c in range(k):
                    if z[c] <= 0.0:
                        w[idx[c]] = 0.0
                        passive[idx[c]] = False
                continue
            for c in range(k):
                i = idx[c]
                w[i] = w[i] + alpha * (z[c] - w[i])
                if w[i] < 0.0:
                    w[i] = 0.0
            w[idx[pivot]] = 0.0
            for c in range(k):
                if w[idx[c]] <= 0.0:
                    w[idx[c]] = 0.0
                    passive[idx[c]] = False


_nnls_py = _nnls_impl


# ---------------------------------------------------------------------------
# hull-membership scan over foreign points (the purity test inner loop)
# ---------------------------------------------------------------------------
# Returns (code, index): code 1 -> some foreign point inside the hull (index
# says which), code 0 -> all outside, code -1 -> NNLS hit its iteration cap
# on the point at index.

def _purity_scan_py(a_aug, foreign_aug, eps_rel, tol, max_iter):
    n_pts = foreign_aug.shape[0]
    for r in range(n_pts):
        bt = foreign_aug[r]
        w, _, conv = _nnls_py(a_aug, bt, tol, max_iter)
        if not conv:
            return -1, r
        resid = a_aug @ w - bt
        if np.sqrt(resid @ resid) < eps_rel * np.sqrt(bt @ bt):
            return 1, r
    return 0, -1


if NUMBA_ENABLED:
    _diffusion_steps_nb = njit(cache=True)(_diffusion_steps_loop)
    _nnls_nb = njit(cache=True)(_nnls_impl)

    @njit(cache=True)
    def _purity_scan_nb(a_aug, foreign_aug, eps_rel, tol, max_iter):
        n_pts = foreign_aug.shape[0]
        for r in range(n_pts):
            bt = foreign_aug[r]
            w, _, conv = _nnls_nb(a_aug, bt, tol, max_iter)
            if not conv:
                return -1, r
            resid = a_aug @ w - bt
            if np.sqrt(resid @ resid) < eps_rel * np.sqrt(bt @ bt):
                return 1, r
        return 0, -1

    diffusion_steps = _diffusion_steps_nb
    nnls_solve = _nnls_nb
    purity_scan = _purity_scan_nb
else:
    _diffusion_steps_nb = None
    _nnls_nb = None
    _purity_scan_nb = None

    diffusion_steps = _diffusion_steps_py
    nnls_solve = _nnls_py
    purity_scan = _purity_scan_py
