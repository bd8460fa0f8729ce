"""Mutual information machinery: Pearson correlation, the Gaussian closed
form for feature-feature MI, and a nearest-neighbor estimator for the mutual
information between a continuous feature and a discrete label.
"""

import numpy as np
from scipy.special import digamma

from .errors import DegenerateInputError

# floor on 1 - rho^2 so the Gaussian closed form stays finite for
# duplicated features
EPS_CLAMP = 1e-12


def pearson_correlation(xs, ys):
    """Sample Pearson correlation, clamped to [-1, 1]."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if xs.shape != ys.shape or xs.size < 2:
        raise ValueError("inputs must share a length of at least 2")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    vx = dx @ dx
    vy = dy @ dy
    if vx == 0.0 or vy == 0.0:
        raise DegenerateInputError("correlation of a constant vector is undefined")
    r = (dx @ dy) / np.sqrt(vx * vy)
    return float(min(1.0, max(-1.0, r)))


def gaussian_mi(rho):
    """MI of a correlated Gaussian pair, -0.5*ln(1 - rho^2), in nats.

    Accepts scalars or arrays; rho^2 is clamped to 1 - EPS_CLAMP so
    perfectly correlated inputs stay finite.
    """
    rho2 = np.minimum(np.square(rho), 1.0 - EPS_CLAMP)
    out = -0.5 * np.log1p(-rho2)
    return float(out) if np.isscalar(rho) else out


#: value assigned to self-MI terms I(X^i, X^i) after clamping
SELF_MI = gaussian_mi(1.0)


def mi_feature_feature_exact(xs, ys):
    """Feature-feature MI via the Gaussian closed form (the sampled fields
    are jointly Gaussian, so no generic estimator is needed)."""
    return gaussian_mi(pearson_correlation(xs, ys))


def mi_feature_label(xs, ys, k_neighbors=3, rng_seed=0):
    """Nearest-neighbor estimate of I(X;Y) for continuous xs and discrete
    labels ys, in nats.

    Per point: take the radius to its k-th nearest neighbor within its own
    class, count how many points of the full sample fall strictly inside
    that radius, and combine the counts through digamma terms. A seeded
    jitter of amplitude 1e-10 * std(xs) breaks ties. Negative estimates
    clamp to 0.
    """
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys).ravel()
    n = xs.size
    if ys.shape != xs.shape:
        raise ValueError("xs and ys must have the same length")
    if int(k_neighbors) != k_neighbors or k_neighbors < 1:
        raise ValueError("k_neighbors must be a positive integer")
    k_neighbors = int(k_neighbors)
    classes, counts = np.unique(ys, return_counts=True)
    if classes.size < 2:
        raise DegenerateInputError("need at least two classes")
    if counts.min() < 2:
        bad = classes[np.argmin(counts)]
        raise DegenerateInputError(f"class {bad} has fewer than 2 members")
    if n < classes.size * (k_neighbors + 1):
        raise ValueError(
            f"need at least K*(k_neighbors+1)={classes.size * (k_neighbors + 1)} samples, got {n}"
        )

    std = xs.std()
    if std == 0.0:
        return 0.0
    x = xs + 1e-10 * std * np.random.default_rng(rng_seed).standard_normal(n)
    x_sorted = np.sort(x)

    psi_k = np.empty(n)
    psi_nc = np.empty(n)
    psi_m = np.empty(n)
    for c, nc in zip(classes, counts):
        mask = ys == c
        v = np.sort(x[mask])
        k = min(k_neighbors, nc - 1)
        pad = np.concatenate([np.full(k, -np.inf), v, np.full(k, np.inf)])
        cand = np.empty((2 * k, nc))
        for j in range(1, k + 1):
            cand[j - 1] = v - pad[k - j : k - j + nc]
            cand[k + j - 1] = pad[k + j : k + j + nc] - v
        radius = np.partition(cand, k - 1, axis=0)[k - 1]
        r_in = np.nextafter(radius, 0.0)  # strictly-inside counting
        xi = x[mask]
        m = np.searchsorted(x_sorted, xi + r_in, side="right") - np.searchsorted(
            x_sorted, xi - r_in, side="left"
        )
        psi_k[mask] = digamma(k)
        psi_nc[mask] = digamma(nc)
        psi_m[mask] = digamma(m)
    mi = digamma(n) + psi_k.mean() - psi_nc.mean() - psi_m.mean()
    return max(float(mi), 0.0)
