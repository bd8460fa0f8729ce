"""Convex data augmentation: well-spread seeds per class, pure sets grown by
nearest-neighbor accretion under the projected purity test, and new samples
drawn as random convex combinations of the pure sets.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import labeling
from .convex import projected_purity_test
from .errors import EmptySeedError, InvalidStateError


@dataclass(frozen=True)
class AugmentConfig:
    n_seeds: int = 60          # seed targets per class
    p_max: int = 10            # masks tried before giving up on a set
    d: int = 5                 # projected dimension for purity tests
    n_augmented: int = 1000
    eps1: float = 0.3          # foreign-proximity filter, fraction of delta_ref
    eps2: float = 0.05         # isolation filter, fraction of delta_ref
    eps_da: float = 1e-6       # relative NNLS residual threshold
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_seeds < 1 or self.p_max < 1 or self.d < 1 or self.n_augmented < 1:
            raise ValueError("counts in AugmentConfig must be positive")
        if not (0.0 <= self.eps1 <= 1.0 and 0.0 <= self.eps2 <= 1.0):
            raise ValueError("eps1 and eps2 must lie in [0;1]")
        if self.eps_da <= 0:
            raise ValueError("eps_da must be positive")


@dataclass(frozen=True)
class PureSetRegistry:
    """Per-class pure index sets, keyed by (class, slot)."""

    sets_by_class: dict

    def entries(self):
        """(class_label, slot, indices) triples in deterministic order."""
        for k in sorted(self.sets_by_class):
            for slot, members in enumerate(self.sets_by_class[k]):
                yield k, slot, members

    @property
    def n_entries(self):
        return sum(len(v) for v in self.sets_by_class.values())


@dataclass(frozen=True)
class AugmentedDataset:
    """Generated samples with their labels and full provenance: which pure
    set produced each sample, and with what convex weights."""

    samples: np.ndarray
    labels: np.ndarray
    entries: tuple             # ((class_label, slot, members), ...)
    sample_entries: np.ndarray  # entry index per sample
    weights: tuple             # per-sample weight vectors

    def __post_init__(self):
        for i, w in enumerate(self.weights):
            w = np.asarray(w)
            if w.min() < 0 or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"weights of sample {i} are not convex")

    @property
    def n_samples(self):
        return self.samples.shape[0]


def _delta_values(delta):
    return delta.values if isinstance(delta, labeling.DissimilarityMatrix) else np.asarray(delta)


def select_seeds(delta, labels, class_label, medoid_index, cfg):
    """Two-stage seed pick for one class: filter out boundary-hugging and
    isolated points, then spread seeds by maximin greedy starting from the
    class medoid. Returns the medoid plus up to min(n_seeds, |survivors|-1)
    additional indices."""
    d = _delta_values(delta)
    y = np.asarray(labels)
    if y[medoid_index] != class_label:
        raise ValueError(f"medoid {medoid_index} is not labeled {class_label}")
    members = np.flatnonzero(y == class_label)
    foreign = np.flatnonzero(y != class_label)

    if foreign.size:
        delta_ref = float(d[medoid_index, foreign].min())
        near_foreign = d[np.ix_(members, foreign)].min(axis=1) <= cfg.eps1 * delta_ref
        members = members[~near_foreign]
        if members.size:
            dm = d[np.ix_(members, members)].copy()
            np.fill_diagonal(dm, np.inf)
            isolated = dm.min(axis=1) > cfg.eps2 * delta_ref
            members = members[~isolated]
    if members.size == 0:
        raise EmptySeedError(class_label)

    seeds = [int(medoid_index)]
    cand = members[members != medoid_index]
    n_extra = min(cfg.n_seeds, members.size - 1, cand.size)
    min_dist = d[cand, medoid_index].copy() if cand.size else np.empty(0)
    for _ in range(max(0, n_extra)):
        pick = int(np.argmax(min_dist))
        seeds.append(int(cand[pick]))
        min_dist = np.minimum(min_dist, d[cand, cand[pick]])
        min_dist[pick] = -np.inf
    return seeds


def _mask_seed(base_seed, seed_index, set_size):
    return int(np.random.SeedSequence((base_seed, seed_index, set_size)).generate_state(1)[0])


def grow_pure_set(seed_index, delta, train, cfg):
    """Grow a set from one seed by appending nearest training neighbors (by
    dissimilarity, ties toward the lowest index) while the projected purity
    test keeps passing. A foreign-labeled neighbor fails by definition, so
    growth stops there. Returns the last verified set."""
    d = _delta_values(delta)
    y = train.labels
    if y is None:
        raise ValueError("training set must be labeled")
    k = int(y[seed_index])
    order = np.argsort(d[seed_index], kind="stable")
    current = [int(seed_index)]
    for nb in order:
        nb = int(nb)
        if nb == seed_index:
            continue
        if y[nb] != k:
            break
        candidate = current + [nb]
        ok = projected_purity_test(
            candidate, k, train, cfg.d, cfg.p_max, cfg.eps_da,
            _mask_seed(cfg.rng_seed, int(seed_index), len(candidate)),
        )
        if not ok:
            break
        current = candidate
    return current


def build_registry(train, delta, medoids, cfg):
    """Seed selection and pure-set growth for every class. Sets of one class
    merge only when one is contained in the other (the union of two pure
    sets need not be pure). Classes ending up with no pure set are reported
    with a warning and recorded as empty."""
    y = train.labels
    if y is None:
        raise ValueError("training set must be labeled")
    medoids = np.asarray(medoids, dtype=np.int64)
    sets_by_class = {}
    for c, medoid in enumerate(medoids, start=1):
        try:
            seeds = select_seeds(delta, y, c, int(medoid), cfg)
        except EmptySeedError as exc:
            warnings.warn(str(exc))
            sets_by_class[c] = []
            continue
        grown = [tuple(grow_pure_set(s, delta, train, cfg)) for s in seeds]
        kept = []
        key_sets = [frozenset(g) for g in grown]
        for i, fs in enumerate(key_sets):
            absorbed = False
            for j, other in enumerate(key_sets):
                if i == j:
                    continue
                if fs < other or (fs == other and j < i):
                    absorbed = True
                    break
            if not absorbed:
                kept.append(grown[i])
        sets_by_class[c] = kept
        if not kept:
            warnings.warn(f"class {c} has no pure sets")
    return PureSetRegistry(sets_by_class)


def apply_weights(entries, sample_entries, weights, features):
    """Rebuild augmented samples in any feature representation of the same
    training rows. Convex combinations commute with linear reductions, so
    the provenance is representation-independent."""
    features = np.asarray(features)
    out = np.empty((len(sample_entries), features.shape[1]))
    for i, (e, w) in enumerate(zip(sample_entries, weights)):
        members = np.asarray(entries[e][2], dtype=np.int64)
        out[i] = np.asarray(w) @ features[members]
    return out


def generate_augmented(registry, train, cfg):
    """Draw cfg.n_augmented convex combinations, allocated round-robin over
    registry entries (per-entry counts differ by at most one). Weights are
    flat-Dirichlet; the weight stream of sample i is seeded by
    (rng_seed, i), so any subset can be regenerated independently."""
    entries = tuple(registry.entries())
    if not entries:
        raise InvalidStateError("registry has no pure sets")
    n = int(cfg.n_augmented)
    sample_entries = np.arange(n, dtype=np.int64) % len(entries)
    weights = []
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        e = entries[sample_entries[i]]
        rng = np.random.default_rng((cfg.rng_seed, 104729, i))
        w = rng.dirichlet(np.ones(len(e[2])))
        weights.append(w)
        labels[i] = e[0]
    samples = apply_weights(entries, sample_entries, weights, train.samples)
    return AugmentedDataset(samples, labels, entries, sample_entries, tuple(weights))


def audit_relabel_fidelity(aug, train_dataset, mesh, medoid_samples, medoid_labels,
                           n_t, diffusivity, kappa, dt, rank_tol=1e-10,
                           sample_size=200, rng_seed=0):
    """Re-run the labeling physics on an audit subsample of the augmented
    data, reconstructed in full field space from provenance (the member
    indices refer to rows of train_dataset), and report the fraction whose
    nearest-medoid label matches the assigned one. dt must be the step used
    when the dataset was labeled."""
    n = aug.n_samples
    take = min(int(sample_size), n)
    rng = np.random.default_rng(rng_seed)
    chosen = np.sort(rng.choice(n, size=take, replace=False))
    full_samples = apply_weights(
        aug.entries, aug.sample_entries[chosen], [aug.weights[i] for i in chosen],
        train_dataset.samples,
    )
    relabels = labeling.relabel_by_medoids(
        full_samples, mesh, medoid_samples,
        medoid_labels, n_t, diffusivity, kappa, dt, rank_tol,
    )
    assigned = aug.labels[chosen]
    matches = relabels == assigned
    return {
        "fidelity": float(matches.mean()),
        "n_audited": int(take),
        "mismatches": [int(i) for i in chosen[~matches]],
    }
