"""Feature selection for regionalized features: a distance-based redundancy
metamodel calibrated on a design of experiments over node pairs, the greedy
relevance/redundancy selector built on it, and the two comparison selectors
(top-MI filter and purely geometric maximin spread).

Feature indices are 1-based everywhere a FeatureSet appears; use
FeatureSet.columns() for the 0-based column view.
"""

from dataclasses import dataclass

import numpy as np

from . import convex
from .errors import DegenerateInputError, FitError
from .mutual_info import EPS_CLAMP, mi_feature_label


@dataclass(frozen=True)
class FeatureSet:
    """Ordered distinct 1-based feature indices; selection order preserved."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise ValueError("feature set must be nonempty")
        if len(set(idx)) != len(idx):
            raise ValueError("feature set contains duplicate indices")
        if min(idx) < 1:
            raise ValueError("feature indices are 1-based")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def columns(self):
        """0-based column indices, in selection order."""
        return np.asarray(self.indices, dtype=np.int64) - 1

    @staticmethod
    def from_columns(cols):
        return FeatureSet(tuple(int(c) + 1 for c in cols))


@dataclass(frozen=True)
class RedundancyModel:
    """Distance-decay stand-in for pairwise feature MI:
    I~(r) = i_inf + gamma1*(r1-r)^alpha1*H(r1-r) + gamma2*(r2-r)^alpha2*H(r2-r),
    with H(0) = 0. Nonnegative gammas with positive alphas make it
    nonincreasing in r, and I~(r) = i_inf for r >= max(r1, r2)."""

    i_inf: float
    gamma1: float
    gamma2: float
    r1: float
    r2: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if self.i_inf < 0 or self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("i_inf and gammas must be nonnegative")
        if self.r1 <= 0 or self.r2 <= 0 or self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ValueError("ranges and exponents must be positive")


def evaluate_redundancy_model(model, r):
    """I~(r); accepts scalars or arrays of nonnegative distances."""
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr < 0):
        raise ValueError("distances must be nonnegative")
    out = np.full(r_arr.shape, model.i_inf)
    m1 = r_arr < model.r1
    if np.any(m1):
        out[m1] += model.gamma1 * (model.r1 - r_arr[m1]) ** model.alpha1
    m2 = r_arr < model.r2
    if np.any(m2):
        out[m2] += model.gamma2 * (model.r2 - r_arr[m2]) ** model.alpha2
    return float(out) if np.isscalar(r) else out


@dataclass(frozen=True)
class DoePlan:
    """Node pairs grouped by target distance, with realized distances and a
    shortfall count per bin when the mesh cannot supply enough pairs."""

    bins: tuple               # ((r_j, n_j), ...)
    pairs: np.ndarray         # (n_pairs, 2) node indices
    pair_distances: np.ndarray
    pair_bins: np.ndarray     # bin index per pair
    shortfalls: dict          # bin index -> missing pair count

    def __post_init__(self):
        if self.pairs.shape[0] != self.pair_distances.size:
            raise ValueError("pairs and pair_distances disagree")


def build_doe(mesh, n_probe_nodes, bins, bin_tol, rng_seed):
    """Sample node pairs whose distances land within bin_tol*r_j of each
    target distance r_j. Distances are only evaluated from a few seeded
    probe nodes to the full mesh, never all-pairs. Bins the mesh cannot
    fill are reported in shortfalls instead of being silently dropped."""
    bins = tuple((float(r), int(n)) for r, n in bins)
    if len(bins) == 0:
        raise ValueError("bins must be nonempty")
    rs = [r for r, _ in bins]
    if any(r <= 0 for r in rs):
        raise ValueError("bin distances must be positive")
    if any(b <= a for a, b in zip(rs, rs[1:])):
        raise ValueError("bin distances must be increasing")
    if any(n <= 0 for _, n in bins):
        raise ValueError("bin pair counts must be positive")
    if bin_tol <= 0:
        raise ValueError("bin_tol must be positive")
    if int(n_probe_nodes) != n_probe_nodes or n_probe_nodes < 1:
        raise ValueError("n_probe_nodes must be a positive integer")

    rng = np.random.default_rng(rng_seed)
    n_nodes = mesh.n_nodes
    probes = np.sort(rng.choice(n_nodes, size=min(int(n_probe_nodes), n_nodes), replace=False))
    diff = mesh.nodes[probes, None, :] - mesh.nodes[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))  # (n_probes, n_nodes)

    pairs, dists, pair_bins = [], [], []
    shortfalls = {}
    used = set()
    for b, (r_j, n_j) in enumerate(bins):
        ok = np.abs(dist - r_j) <= bin_tol * r_j
        pi, ni = np.nonzero(ok)
        cand = {}
        for p, q in zip(probes[pi], ni):
            if p == q:
                continue
            key = (min(int(p), int(q)), max(int(p), int(q)))
            if key not in used:
                cand[key] = None
        cand = sorted(cand)
        if len(cand) > n_j:
            take = rng.choice(len(cand), size=n_j, replace=False)
            chosen = [cand[t] for t in sorted(take)]
        else:
            chosen = cand
        if len(chosen) < n_j:
            shortfalls[b] = n_j - len(chosen)
        for key in chosen:
            used.add(key)
            pairs.append(key)
            dists.append(float(np.linalg.norm(mesh.nodes[key[0]] - mesh.nodes[key[1]])))
            pair_bins.append(b)
    return DoePlan(
        bins,
        np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
        np.asarray(dists),
        np.asarray(pair_bins, dtype=np.int64),
        shortfalls,
    )


DEFAULT_ALPHA_GRID = (0.5, 1.0, 1.5, 2.0)


def fit_redundancy_model(doe, mi_values, manual_override=None, r_grid=None,
                         alpha_grid=DEFAULT_ALPHA_GRID):
    """Calibrate the redundancy metamodel on (distance, MI) pairs from the
    DOE: deterministic grid search over (r1, r2, alpha1, alpha2) with
    nonnegative least squares for (i_inf, gamma1, gamma2) at each grid
    point; the minimum-RSS model wins (first in enumeration order on ties).
    A manual_override model is returned verbatim."""
    if manual_override is not None:
        return manual_override
    y = np.asarray(mi_values, dtype=np.float64)
    r = doe.pair_distances
    if y.shape != r.shape:
        raise ValueError("mi_values must align with doe.pairs")
    n_distinct = np.unique(r).size
    if n_distinct < 8:
        raise FitError(
            f"only {n_distinct} distinct distances; fit needs at least 8 "
            "(supply manual_override instead)"
        )
    if r_grid is None:
        r_grid = tuple(np.linspace(r.min(), r.max(), 8))
    r_grid = tuple(float(v) for v in r_grid)
    if any(v <= 0 for v in r_grid):
        raise ValueError("r_grid values must be positive")

    best = None
    ones = np.ones_like(r)
    for i1, r1 in enumerate(r_grid):
        for r2 in r_grid[i1:]:
            for a1 in alpha_grid:
                col1 = np.where(r < r1, (r1 - r).clip(min=0.0) ** a1, 0.0)
                for a2 in alpha_grid:
                    col2 = np.where(r < r2, (r2 - r).clip(min=0.0) ** a2, 0.0)
                    design = np.column_stack([ones, col1, col2])
                    sol = convex.nnls(design, y)
                    rss = sol.residual_norm**2
                    if best is None or rss < best[0] - 1e-15:
                        best = (rss, sol.weights.copy(), r1, r2, a1, a2)
    rss, w, r1, r2, a1, a2 = best
    return RedundancyModel(float(w[0]), float(w[1]), float(w[2]), r1, r2, a1, a2)


# ---------------------------------------------------------------------------
# relevance / redundancy metrics
# ---------------------------------------------------------------------------

def relevance_scan(ds, k_neighbors=3, rng_seed=0):
    """I(X^i, Y) for every feature, as an array."""
    if ds.labels is None:
        raise ValueError("relevance needs a labeled dataset")
    x = ds.samples
    return np.array([
        mi_feature_label(x[:, j], ds.labels, k_neighbors, rng_seed)
        for j in range(x.shape[1])
    ])


def relevance(ds, s, k_neighbors=3, rng_seed=0):
    """Mean MI between the selected features and the label."""
    if ds.labels is None:
        raise ValueError("relevance needs a labeled dataset")
    cols = s.columns()
    vals = [mi_feature_label(ds.samples[:, j], ds.labels, k_neighbors, rng_seed)
            for j in cols]
    return float(np.mean(vals))


def _gaussian_mi_matrix(x):
    """Pairwise Gaussian-closed-form MI of the columns of x, clamped."""
    stds = x.std(axis=0)
    if np.any(stds == 0.0):
        bad = int(np.flatnonzero(stds == 0.0)[0])
        raise DegenerateInputError(f"feature column {bad} is constant")
    rho = np.corrcoef(x, rowvar=False)
    rho = np.atleast_2d(rho)
    rho2 = np.minimum(rho * rho, 1.0 - EPS_CLAMP)
    return -0.5 * np.log1p(-rho2)


def redundancy_exact(ds, s):
    """Mean pairwise Gaussian MI over the selected features, diagonal terms
    included (self-MI is the clamped value)."""
    x = ds.samples[:, s.columns()]
    return float(_gaussian_mi_matrix(x).mean())


def redundancy_model(model, mesh, s):
    """Same mean, with MI replaced by the distance metamodel (I~(0) on the
    diagonal)."""
    pts = mesh.nodes[s.columns()]
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    return float(np.mean(evaluate_redundancy_model(model, dist)))


# ---------------------------------------------------------------------------
# greedy selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StoppingConfig:
    """Stop when the last `window` objective values span less than
    `tol` times the objective range seen so far, or at `max_features`.
    Features with relevance below `min_relevance` are never candidates."""

    window: int = 10
    tol: float = 1e-3
    max_features: int = 128
    min_relevance: float = 0.0


@dataclass(frozen=True)
class SelectionResult:
    method: str
    features: FeatureSet
    objective_trace: tuple

    def __len__(self):
        return len(self.features)


def greedy_mrmr_selection(relevances, redundancy_column, stop=StoppingConfig()):
    """Core greedy update: start from the highest-relevance feature, then
    repeatedly add argmax_i ( relevance_i - mean_{j in S} redundancy(i, j) ),
    ties toward the lowest index.

    redundancy_column(j) must return the redundancy of every feature against
    feature j (0-based). Returns (0-based selection order, objective trace).
    """
    rel = np.asarray(relevances, dtype=np.float64)
    n = rel.size
    eligible = rel >= stop.min_relevance
    if not np.any(eligible):
        raise ValueError("no feature passes the relevance floor")
    scores = np.where(eligible, rel, -np.inf)
    first = int(np.argmax(scores))
    selected = [first]
    trace = [float(scores[first])]
    blocked = ~eligible
    blocked[first] = True
    cum_red = np.zeros(n)
    cap = min(stop.max_features, int(np.sum(eligible)))
    while len(selected) < cap:
        cum_red += redundancy_column(selected[-1])
        scores = rel - cum_red / len(selected)
        scores[blocked] = -np.inf
        nxt = int(np.argmax(scores))
        trace.append(float(scores[nxt]))
        selected.append(nxt)
        blocked[nxt] = True
        if len(trace) >= stop.window:
            recent = trace[-stop.window:]
            full_span = max(trace) - min(trace)
            if max(recent) - min(recent) <= stop.tol * full_span:
                break
    return selected, trace


def geostatistical_mrmr(ds, mesh, model, stop=StoppingConfig(), k_neighbors=3,
                        rng_seed=0, relevances=None):
    """Greedy relevance/redundancy selection with redundancy terms read off
    the distance metamodel instead of being estimated per pair."""
    if relevances is None:
        relevances = relevance_scan(ds, k_neighbors, rng_seed)
    nodes = mesh.nodes

    def redundancy_column(j):
        d = np.linalg.norm(nodes - nodes[j], axis=1)
        return evaluate_redundancy_model(model, d)

    selected, trace = greedy_mrmr_selection(relevances, redundancy_column, stop)
    return SelectionResult("geostatistical_mrmr", FeatureSet.from_columns(selected),
                           tuple(trace))


def mi_filter(ds, n_f, k_neighbors=3, rng_seed=0, relevances=None):
    """Top n_f features by MI with the label, ties toward the lowest index."""
    if relevances is None:
        relevances = relevance_scan(ds, k_neighbors, rng_seed)
    rel = np.asarray(relevances, dtype=np.float64)
    if int(n_f) != n_f or n_f < 1 or n_f > rel.size:
        raise ValueError(f"n_f must be in [1;{rel.size}]")
    order = np.argsort(-rel, kind="stable")[: int(n_f)]
    return SelectionResult("mi_filter", FeatureSet.from_columns(order),
                           tuple(float(rel[j]) for j in order))


def geometric_filter(mesh, n_f, rng_seed=0):
    """Label-blind maximin spread over node coordinates from a seeded random
    start; ties toward the lowest index. The trace records the maximin
    distance of each pick (0 for the seeded start)."""
    n = mesh.n_nodes
    if int(n_f) != n_f or n_f < 1 or n_f > n:
        raise ValueError(f"n_f must be in [1;{n}]")
    n_f = int(n_f)
    rng = np.random.default_rng(rng_seed)
    start = int(rng.integers(n))
    selected = [start]
    trace = [0.0]
    min_dist = np.linalg.norm(mesh.nodes - mesh.nodes[start], axis=1)
    min_dist[start] = -np.inf
    while len(selected) < n_f:
        nxt = int(np.argmax(min_dist))
        trace.append(float(min_dist[nxt]))
        selected.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(mesh.nodes - mesh.nodes[nxt], axis=1))
        min_dist[nxt] = -np.inf
    return SelectionResult("geometric_filter", FeatureSet.from_columns(selected),
                           tuple(trace))


def selector_metrics(ds, mesh, model, s, k_neighbors=3, rng_seed=0):
    """The comparison table row for one selector: relevance, exact
    redundancy, and metamodel redundancy."""
    return {
        "D": relevance(ds, s, k_neighbors, rng_seed),
        "R_exact": redundancy_exact(ds, s),
        "R_model": redundancy_model(model, mesh, s),
    }
