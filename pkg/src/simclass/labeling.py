"""Physics-informed data labeling: a toy reaction-diffusion problem produces
snapshot subspaces per sample, pairwise subspace dissimilarities feed a
k-medoids clustering, and cluster indices become class labels.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import diffusion_steps
from .errors import ConfigurationError, DegenerateInputError
from .synth import grid_info

RIGHT_ANGLE = math.pi / 2.0


@dataclass(frozen=True)
class SnapshotSet:
    """Fields over pseudo-time for one sample, one snapshot per row."""

    snapshots: np.ndarray

    def __post_init__(self):
        snaps = np.ascontiguousarray(self.snapshots, dtype=np.float64)
        if snaps.ndim != 2 or snaps.shape[0] < 1:
            raise ValueError("snapshots must be a nonempty (n_t, n_nodes) matrix")
        snaps.setflags(write=False)
        object.__setattr__(self, "snapshots", snaps)

    @property
    def n_t(self):
        return self.snapshots.shape[0]


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric nonnegative matrix with zero diagonal."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("dissimilarity matrix must be square")
        if np.abs(v - v.T).max() > 1e-12:
            raise ValueError("dissimilarity matrix must be symmetric within 1e-12")
        if np.abs(np.diag(v)).max() > 0.0:
            raise ValueError("dissimilarity matrix must have a zero diagonal")
        if v.min() < 0.0:
            raise ValueError("dissimilarities must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class ClusteringResult:
    medoid_indices: np.ndarray
    assignments: np.ndarray  # labels in [1;K]
    objective: float

    def __post_init__(self):
        med = np.asarray(self.medoid_indices, dtype=np.int64)
        asg = np.asarray(self.assignments, dtype=np.int64)
        if med.ndim != 1 or asg.ndim != 1:
            raise ValueError("medoid_indices and assignments must be 1-D")
        if asg.min() < 1 or asg.max() > med.size:
            raise ValueError("assignments must lie in [1;K]")
        med.setflags(write=False)
        asg.setflags(write=False)
        object.__setattr__(self, "medoid_indices", med)
        object.__setattr__(self, "assignments", asg)


# ---------------------------------------------------------------------------
# toy simulation
# ---------------------------------------------------------------------------

def stable_step(mesh, diffusivity, kappa, u_max):
    """Largest explicit-Euler step that keeps both the 5-point diffusion
    stencil and the cubic decay term stable for fields bounded by u_max."""
    nx, ny, dx, dy = grid_info(mesh)
    inv_dx2 = 1.0 / (dx * dx) if nx > 1 else 0.0
    inv_dy2 = 1.0 / (dy * dy) if ny > 1 else 0.0
    rate = 2.0 * diffusivity * (inv_dx2 + inv_dy2) + 3.0 * kappa * u_max * u_max
    if rate <= 0.0:
        raise ConfigurationError("dynamics have no decay rate; check diffusivity/kappa")
    return 1.0 / rate


def run_toy_simulation(sample, mesh, n_t, diffusivity, kappa=1.0, dt=None):
    """Integrate u' = diffusivity*Lap(u) - kappa*u^3 from u0 = sample with
    zero-gradient boundaries; returns the n_t post-step fields.

    dt defaults to 0.9x the stability bound derived from the grid spacing
    and the sample amplitude. An explicit dt beyond the bound raises
    ConfigurationError rather than diverging silently.
    """
    sample = np.ascontiguousarray(sample, dtype=np.float64).ravel()
    if sample.size != mesh.n_nodes:
        raise ValueError("sample length must match the mesh node count")
    if int(n_t) != n_t or n_t < 1:
        raise ValueError("n_t must be a positive integer")
    if diffusivity <= 0:
        raise ValueError("diffusivity must be positive")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    n_t = int(n_t)
    u_max = float(np.abs(sample).max())
    bound = stable_step(mesh, diffusivity, kappa, u_max)
    if dt is None:
        dt = 0.9 * bound
    elif dt <= 0:
        raise ValueError("dt must be positive")
    elif dt > bound:
        raise ConfigurationError(f"dt={dt} exceeds the stability bound {bound:.6g}")
    nx, ny, dx, dy = grid_info(mesh)
    inv_dx2 = 1.0 / (dx * dx) if nx > 1 else 0.0
    inv_dy2 = 1.0 / (dy * dy) if ny > 1 else 0.0
    snaps = diffusion_steps(sample, ny, nx, float(dt), float(diffusivity), float(kappa),
                            inv_dx2, inv_dy2, n_t)
    return SnapshotSet(snaps)


# ---------------------------------------------------------------------------
# subspace dissimilarity
# ---------------------------------------------------------------------------

def snapshot_basis(snapshots, rank_tol=1e-10):
    """Orthonormal basis of the snapshot span, truncating singular values
    below rank_tol relative to the largest one."""
    a = np.asarray(snapshots, dtype=np.float64)
    u, s, _ = np.linalg.svd(a.T, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateInputError("snapshot span is numerically zero")
    rank = int(np.sum(s > rank_tol * s[0]))
    return u[:, :rank]


def _principal_angles(qa, qb):
    """Principal angles between orthonormal bases, ascending. Uses cosines
    from the cross-Gram SVD and switches to a sine formulation for small
    angles, where arccos loses precision."""
    small, big = (qa, qb) if qa.shape[1] <= qb.shape[1] else (qb, qa)
    cosines = np.clip(np.linalg.svd(big.T @ small, compute_uv=False), 0.0, 1.0)
    sines = np.linalg.svd(small - big @ (big.T @ small), compute_uv=False)
    sines = np.clip(sines[::-1], 0.0, 1.0)  # ascending, aligned with cosines
    angles = np.where(cosines**2 < 0.5, np.arccos(cosines), np.arcsin(sines))
    return angles


def _dissimilarity_from_bases(qa, qb):
    angles = _principal_angles(qa, qb)
    pad = abs(qa.shape[1] - qb.shape[1])
    return float(np.sqrt(np.sum(angles**2) + pad * RIGHT_ANGLE**2))


def grassmann_dissimilarity(a, b, rank_tol=1e-10):
    """Subspace distance sqrt(sum theta_k^2) between the snapshot spans; the
    |p-q| angles missing under a dimension mismatch count as pi/2.

    The two arguments are put in a canonical order before any numerics, so
    swapping them returns the bit-identical value.
    """
    key_a = (a.snapshots.shape, a.snapshots.tobytes())
    key_b = (b.snapshots.shape, b.snapshots.tobytes())
    if key_b < key_a:
        a, b = b, a
    qa = snapshot_basis(a.snapshots, rank_tol)
    qb = snapshot_basis(b.snapshots, rank_tol)
    return _dissimilarity_from_bases(qa, qb)


def build_dissimilarity_matrix(snapshot_sets, rank_tol=1e-10):
    """All-pairs dissimilarities; each unordered pair is computed once, so
    the result is exactly symmetric."""
    n = len(snapshot_sets)
    if n < 2:
        raise ValueError("need at least two snapshot sets")
    bases = []
    for i, ss in enumerate(snapshot_sets):
        try:
            bases.append(snapshot_basis(ss.snapshots, rank_tol))
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"snapshot set {i}: {exc}") from exc
    delta = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = _dissimilarity_from_bases(bases[i], bases[j])
            delta[i, j] = d
            delta[j, i] = d
    return DissimilarityMatrix(delta)


# ---------------------------------------------------------------------------
# k-medoids
# ---------------------------------------------------------------------------

def k_medoids(delta, k, rng_seed=0, max_iter=100):
    """Alternating k-medoids on a precomputed dissimilarity matrix.

    Initialization is a deterministic greedy spread: the row with the lowest
    total dissimilarity seeds the first medoid and the rest are maximin
    picks (rng_seed is accepted for interface stability but unused). All
    ties break toward the lowest index. The objective never increases.
    """
    d = delta.values if isinstance(delta, DissimilarityMatrix) else np.asarray(delta)
    n = d.shape[0]
    if int(k) != k or k < 2:
        raise ValueError("k must be an integer >= 2")
    k = int(k)
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points {n}")
    if int(max_iter) != max_iter or max_iter < 1:
        raise ValueError("max_iter must be a positive integer")

    medoids = [int(np.argmin(d.sum(axis=1)))]
    min_dist = d[:, medoids[0]].copy()
    while len(medoids) < k:
        min_dist[medoids] = -np.inf  # never re-pick a medoid
        nxt = int(np.argmax(min_dist))
        medoids.append(nxt)
        min_dist = np.minimum(min_dist, d[:, nxt])
    medoids = np.sort(np.asarray(medoids))

    prev_objective = np.inf
    for _ in range(int(max_iter)):
        cols = d[:, medoids]
        assign = np.argmin(cols, axis=1)  # first minimum -> lowest medoid index
        objective = float(cols[np.arange(n), assign].sum())
        if objective > prev_objective + 1e-9:
            raise AssertionError("k-medoids objective increased")
        prev_objective = objective
        new_medoids = medoids.copy()
        for c in range(k):
            members = np.flatnonzero(assign == c)
            if members.size == 0:
                continue
            costs = d[np.ix_(members, members)].sum(axis=0)
            new_medoids[c] = members[int(np.argmin(costs))]
        new_medoids = np.sort(new_medoids)
        if np.array_equal(new_medoids, medoids):
            break
        medoids = new_medoids

    cols = d[:, medoids]
    assign = np.argmin(cols, axis=1)
    objective = float(cols[np.arange(n), assign].sum())
    return ClusteringResult(medoids, assign + 1, objective)


# ---------------------------------------------------------------------------
# end-to-end labeling
# ---------------------------------------------------------------------------

def shared_time_step(ds, mesh, diffusivity, kappa):
    """Stability-bounded step shared by every sample of a dataset, so that
    snapshot subspaces are comparable across samples."""
    u_max = float(np.abs(ds.samples).max())
    return 0.9 * stable_step(mesh, diffusivity, kappa, u_max)


def simulate_dataset(ds, mesh, n_t, diffusivity, kappa, dt):
    return [run_toy_simulation(ds.samples[i], mesh, n_t, diffusivity, kappa, dt)
            for i in range(ds.n_samples)]


def label_dataset(ds, mesh, k=4, n_t=5, diffusivity=0.01, kappa=1.0,
                  rank_tol=1e-10, rng_seed=0, max_iter=100):
    """Run the three-step labeling chain: simulate every sample, build the
    dissimilarity matrix, cluster, and attach cluster indices as labels.

    Returns (labeled dataset, dissimilarity matrix, clustering result); the
    matrix is kept because augmentation reuses it.
    """
    if ds.labels is not None:
        raise ValueError("dataset is already labeled")
    dt = shared_time_step(ds, mesh, diffusivity, kappa)
    snapshot_sets = simulate_dataset(ds, mesh, n_t, diffusivity, kappa, dt)
    delta = build_dissimilarity_matrix(snapshot_sets, rank_tol)
    clustering = k_medoids(delta, k, rng_seed=rng_seed, max_iter=max_iter)
    labeled = ds.with_labels(clustering.assignments)
    return labeled, delta, clustering


def relabel_by_medoids(samples, mesh, medoid_samples, medoid_labels, n_t,
                       diffusivity, kappa, dt, rank_tol=1e-10):
    """Operational classifier behind the labels: simulate each sample and
    assign the label of the medoid with the smallest subspace dissimilarity.
    Used to audit augmented data."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    medoid_samples = np.atleast_2d(np.asarray(medoid_samples, dtype=np.float64))
    medoid_labels = np.asarray(medoid_labels, dtype=np.int64)
    medoid_bases = [
        snapshot_basis(
            run_toy_simulation(m, mesh, n_t, diffusivity, kappa, dt).snapshots, rank_tol
        )
        for m in medoid_samples
    ]
    out = np.empty(samples.shape[0], dtype=np.int64)
    for i in range(samples.shape[0]):
        q = snapshot_basis(
            run_toy_simulation(samples[i], mesh, n_t, diffusivity, kappa, dt).snapshots,
            rank_tol,
        )
        dists = [_dissimilarity_from_bases(q, qm) for qm in medoid_bases]
        out[i] = medoid_labels[int(np.argmin(dists))]
    return out


__all__ = [
    "SnapshotSet",
    "DissimilarityMatrix",
    "ClusteringResult",
    "stable_step",
    "run_toy_simulation",
    "snapshot_basis",
    "grassmann_dissimilarity",
    "build_dissimilarity_matrix",
    "k_medoids",
    "shared_time_step",
    "simulate_dataset",
    "label_dataset",
    "relabel_by_medoids",
]
