"""Synthetic desk-scale data: rectangular meshes, smooth random fields built
from sinusoidal fluctuation modes, dataset splitting, and the plain-text file
formats used to hand artifacts between pipeline stages.
"""

import math
from dataclasses import dataclass

import numpy as np

MATRIX_MAGIC = "simclass-matrix"
MESH_MAGIC = "simclass-mesh"
FORMAT_VERSION = "v1"

TRAIN, VAL, TEST = "train", "val", "test"
_TAGS = (TRAIN, VAL, TEST)


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def seed_tuple(rng_seed):
    """Normalize an int-or-tuple seed so extra stream indices can be appended."""
    if isinstance(rng_seed, (tuple, list)):
        return tuple(int(v) for v in rng_seed)
    return (int(rng_seed),)


@dataclass(frozen=True)
class Mesh:
    """Node coordinates of a discretization grid, one row per node."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        if nodes.ndim != 2 or nodes.shape[0] < 2:
            raise ValueError("mesh needs at least 2 nodes with equal dimension")
        if nodes.shape[1] not in (1, 2, 3):
            raise ValueError(f"unsupported node dimension {nodes.shape[1]}")
        if np.unique(nodes, axis=0).shape[0] != nodes.shape[0]:
            raise ValueError("mesh contains duplicate nodes")
        object.__setattr__(self, "nodes", _readonly(nodes))

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def dim(self):
        return self.nodes.shape[1]


@dataclass(frozen=True)
class FieldModel:
    """Reference field plus fluctuation modes evaluated at the mesh nodes.

    Samples are reference + sum_m c_m * modes[m] with c_m zero-mean Gaussian
    of standard deviation coefficient_scale[m].
    """

    reference: np.ndarray
    modes: np.ndarray
    coefficient_scale: np.ndarray

    def __post_init__(self):
        ref = np.asarray(self.reference, dtype=np.float64)
        modes = np.asarray(self.modes, dtype=np.float64)
        scale = np.atleast_1d(np.asarray(self.coefficient_scale, dtype=np.float64))
        if modes.ndim != 2 or modes.shape[0] < 1:
            raise ValueError("modes must be a (n_modes, n_nodes) matrix")
        if ref.shape != (modes.shape[1],):
            raise ValueError("reference length must match mode length")
        if scale.shape == (1,):
            scale = np.full(modes.shape[0], scale[0])
        if scale.shape != (modes.shape[0],) or np.any(scale < 0):
            raise ValueError("coefficient_scale must be nonnegative, one per mode")
        if np.linalg.matrix_rank(modes) < modes.shape[0]:
            raise ValueError("fluctuation modes are linearly dependent")
        object.__setattr__(self, "reference", _readonly(ref))
        object.__setattr__(self, "modes", _readonly(modes))
        object.__setattr__(self, "coefficient_scale", _readonly(scale))

    @property
    def n_modes(self):
        return self.modes.shape[0]


@dataclass(frozen=True)
class FieldDataset:
    """N field samples (one row per sample, one column per mesh node) with
    optional integer labels in [1;K] and optional train/val/test tags."""

    samples: np.ndarray
    labels: np.ndarray | None = None
    split_tags: np.ndarray | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError("samples must be a nonempty 2-D matrix")
        object.__setattr__(self, "samples", _readonly(samples))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (samples.shape[0],):
                raise ValueError("labels length must match sample count")
            if labels.min() < 1:
                raise ValueError("labels must be integers >= 1")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.split_tags is not None:
            tags = np.asarray(self.split_tags, dtype="U5")
            if tags.shape != (samples.shape[0],):
                raise ValueError("split_tags length must match sample count")
            if not np.all(np.isin(tags, _TAGS)):
                raise ValueError(f"split tags must be one of {_TAGS}")
            tags.setflags(write=False)
            object.__setattr__(self, "split_tags", tags)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_features(self):
        return self.samples.shape[1]

    def with_labels(self, labels):
        return FieldDataset(self.samples, labels, self.split_tags)

    def subset(self, index):
        labels = None if self.labels is None else self.labels[index]
        tags = None if self.split_tags is None else self.split_tags[index]
        return FieldDataset(self.samples[index], labels, tags)

    def split_view(self, tag):
        if self.split_tags is None:
            raise ValueError("dataset has no split tags")
        return self.subset(np.flatnonzero(self.split_tags == tag))

    def split_indices(self, tag):
        if self.split_tags is None:
            raise ValueError("dataset has no split tags")
        return np.flatnonzero(self.split_tags == tag)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def build_rectangular_mesh(nx, ny, lx, ly):
    """Regular nx-by-ny grid covering [0,lx] x [0,ly], row-major node order
    (x varies fastest)."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive integers")
    nx, ny = int(nx), int(ny)
    if nx * ny < 2:
        raise ValueError("mesh needs at least 2 nodes")
    if lx <= 0 or ly <= 0:
        raise ValueError("mesh extents must be positive")
    xs = np.linspace(0.0, lx, nx) if nx > 1 else np.zeros(1)
    ys = np.linspace(0.0, ly, ny) if ny > 1 else np.zeros(1)
    gx, gy = np.meshgrid(xs, ys)  # gx[iy, ix]
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    return Mesh(nodes)


def grid_info(mesh):
    """Recover (nx, ny, dx, dy) from a row-major rectangular mesh.

    Raises ValueError when the node layout is not a regular grid. Degenerate
    directions (single row or column) report spacing 0.
    """
    nodes = mesh.nodes
    if nodes.shape[1] != 2:
        raise ValueError("grid meshes are 2-D")
    y0 = nodes[0, 1]
    row0 = np.flatnonzero(np.abs(nodes[:, 1] - y0) > 1e-12 * max(1.0, abs(y0)))
    nx = int(row0[0]) if row0.size else nodes.shape[0]
    if nodes.shape[0] % nx != 0:
        raise ValueError("node count is not a multiple of the first row length")
    ny = nodes.shape[0] // nx
    X = nodes[:, 0].reshape(ny, nx)
    Y = nodes[:, 1].reshape(ny, nx)
    xs, ys = X[0], Y[:, 0]
    if not (np.allclose(X, xs[None, :], atol=1e-12) and np.allclose(Y, ys[:, None], atol=1e-12)):
        raise ValueError("nodes do not form a row-major rectangular grid")
    dx = xs[1] - xs[0] if nx > 1 else 0.0
    dy = ys[1] - ys[0] if ny > 1 else 0.0
    if nx > 1 and not np.allclose(np.diff(xs), dx, rtol=1e-9, atol=1e-12):
        raise ValueError("grid spacing along x is not uniform")
    if ny > 1 and not np.allclose(np.diff(ys), dy, rtol=1e-9, atol=1e-12):
        raise ValueError("grid spacing along y is not uniform")
    return nx, ny, float(dx), float(dy)


def _sinusoid(nodes, rng, f_max_x, f_max_y, band=(0.25, 1.0)):
    ax = rng.uniform(*band) * f_max_x
    ph_x = rng.uniform(0.0, 2.0 * math.pi)
    ay = rng.uniform(*band) * f_max_y
    ph_y = rng.uniform(0.0, 2.0 * math.pi)
    fx = np.sin(ax * nodes[:, 0] + ph_x) if f_max_x > 0 else np.full(nodes.shape[0], math.sin(ph_x))
    fy = np.sin(ay * nodes[:, 1] + ph_y) if f_max_y > 0 else np.full(nodes.shape[0], math.sin(ph_y))
    return fx * fy


def build_field_model(mesh, n_modes, smoothness, rng_seed, coefficient_scale=1.0,
                      reference_amplitude=1.0, reference_offset=0.5):
    """Random smooth field model in the usual truncated-expansion shape:
    leading modes carry the longest wavelengths, later modes are drawn from
    progressively higher frequency bands. Every wavelength stays at or above
    smoothness * domain extent, so realizations are continuous and nearby
    nodes stay correlated. Deterministic in rng_seed.

    A decaying coefficient_scale (one value per mode) concentrates the field
    variance in the leading low-frequency modes, which is what makes the
    correlation, and with it the pairwise MI, fall off with distance toward
    a long-range floor.
    """
    if int(n_modes) != n_modes or n_modes < 1:
        raise ValueError("n_modes must be a positive integer")
    n_modes = int(n_modes)
    if n_modes > mesh.n_nodes:
        raise ValueError(f"n_modes={n_modes} exceeds node count {mesh.n_nodes}")
    if smoothness <= 0:
        raise ValueError("smoothness must be positive")
    nodes = mesh.nodes
    ext = nodes.max(axis=0) - nodes.min(axis=0)
    # wavelength >= smoothness * extent  <=>  frequency <= 2*pi / (smoothness * extent)
    f_max_x = 2.0 * math.pi / (smoothness * ext[0]) if ext[0] > 0 else 0.0
    f_max_y = 2.0 * math.pi / (smoothness * ext[1]) if nodes.shape[1] > 1 and ext[1] > 0 else 0.0

    rng = np.random.default_rng(rng_seed)
    reference = reference_offset + reference_amplitude * _sinusoid(
        nodes, rng, f_max_x, f_max_y, band=(0.3, 0.6))
    modes = np.empty((n_modes, mesh.n_nodes))
    for m in range(n_modes):
        hi = (m + 1) / n_modes
        mode = _sinusoid(nodes, rng, f_max_x, f_max_y, band=(0.75 * hi, hi))
        rms = math.sqrt(float(mode @ mode) / mode.size)
        if rms == 0.0:
            raise ValueError("degenerate all-zero mode; change rng_seed or smoothness")
        modes[m] = mode / rms
    return FieldModel(reference, modes, coefficient_scale)


def sample_fields(model, n_samples, rng_seed):
    """Draw n_samples Gaussian field realizations. Per-sample coefficient
    streams are seeded from (rng_seed, sample index), so any sample batch can
    be regenerated independently."""
    if int(n_samples) != n_samples or n_samples < 1:
        raise ValueError("n_samples must be a positive integer")
    n_samples = int(n_samples)
    base = seed_tuple(rng_seed)
    coeffs = np.empty((n_samples, model.n_modes))
    for i in range(n_samples):
        rng = np.random.default_rng(base + (i,))
        coeffs[i] = rng.standard_normal(model.n_modes) * model.coefficient_scale
    return FieldDataset(model.reference[None, :] + coeffs @ model.modes)


def split_dataset(ds, ratios, rng_seed):
    """Shuffle and renumber so the train block comes first, then val, then
    test. Each split gets floor(ratio*N) samples; leftovers go to train."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.shape != (3,) or np.any(ratios < 0):
        raise ValueError("ratios must be three nonnegative reals")
    if abs(ratios.sum() - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios.sum()!r}")
    n = ds.n_samples
    n_val = int(math.floor(ratios[1] * n + 1e-9))
    n_test = int(math.floor(ratios[2] * n + 1e-9))
    n_train = n - n_val - n_test
    perm = np.random.default_rng(rng_seed).permutation(n)
    tags = np.array([TRAIN] * n_train + [VAL] * n_val + [TEST] * n_test)
    labels = None if ds.labels is None else ds.labels[perm]
    return FieldDataset(ds.samples[perm], labels, tags)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------
# Matrix: one header line "simclass-matrix v1 <rows> <cols>", then rows of
# space-separated decimals at 17 significant digits (lossless float64).
# Mesh: "simclass-mesh v1 <n_nodes> <dim>" with the same body layout.
# Labels / split tags: one token per line.

def _save_table(path, magic, arr):
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(f"{magic} {FORMAT_VERSION} {arr.shape[0]} {arr.shape[1]}\n")
        np.savetxt(fh, arr, fmt="%.17g", delimiter=" ")


def _load_table(path, magic):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 4 or head[0] != magic or head[1] != FORMAT_VERSION:
            raise ValueError(f"{path}: expected '{magic} {FORMAT_VERSION} <rows> <cols>' header")
        rows, cols = int(head[2]), int(head[3])
        body = np.loadtxt(fh, ndmin=2)
    if body.shape != (rows, cols):
        raise ValueError(f"{path}: header says {rows}x{cols}, body is {body.shape}")
    return body


def save_matrix(path, arr):
    _save_table(path, MATRIX_MAGIC, arr)


def load_matrix(path):
    return _load_table(path, MATRIX_MAGIC)


def save_mesh(path, mesh):
    _save_table(path, MESH_MAGIC, mesh.nodes)


def load_mesh(path):
    return Mesh(_load_table(path, MESH_MAGIC))


def save_labels(path, labels):
    with open(path, "w") as fh:
        for v in np.asarray(labels, dtype=np.int64):
            fh.write(f"{v}\n")


def load_labels(path):
    return np.loadtxt(path, dtype=np.int64, ndmin=1)


def save_tags(path, tags):
    with open(path, "w") as fh:
        for t in tags:
            fh.write(f"{t}\n")


def load_tags(path):
    tags = np.loadtxt(path, dtype="U5", ndmin=1)
    if not np.all(np.isin(tags, _TAGS)):
        raise ValueError(f"{path}: split tags must be one of {_TAGS}")
    return tags
