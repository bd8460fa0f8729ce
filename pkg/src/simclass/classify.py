"""Classifier menu and evaluation harness: PCA baseline reduction, five
shallow probabilistic classifiers, soft-vote and stacked ensembles, and the
factorial {classifier} x {reducer} x {augmentation} accuracy study.
"""

from dataclasses import dataclass

import numpy as np

from .augment import apply_weights
from .errors import (
    DegenerateInputError,
    InvalidStateError,
    NonconvergenceError,
    SingularCovarianceError,
)

PCA_TAG = "pca"
FS_TAG = "feature_selection"


@dataclass(frozen=True)
class ReducedDataset:
    """Reduced features with labels; reducer_tag records how the reduction
    was fit (always on the train split only)."""

    features: np.ndarray
    labels: np.ndarray
    reducer_tag: tuple = ("raw", ())

    def __post_init__(self):
        f = np.ascontiguousarray(self.features, dtype=np.float64)
        l = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or l.shape != (f.shape[0],):
            raise ValueError("features must be (n, p) with one label per row")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", l)

    @property
    def n_samples(self):
        return self.features.shape[0]


class PcaTransform:
    """Centered PCA projection; components have a deterministic sign (the
    largest-magnitude entry of each component is positive)."""

    def __init__(self, mean, components):
        self.mean = mean
        self.components = components

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T

    def reconstruct(self, z):
        return np.asarray(z) @ self.components + self.mean


def pca_fit_transform(train, k_components):
    """Fit PCA on the training samples and return (reduced train split,
    transform usable on the other splits)."""
    x = train.samples
    n, p = x.shape
    if int(k_components) != k_components or k_components < 1 or k_components > min(n, p):
        raise ValueError(f"k_components must be in [1;{min(n, p)}]")
    k = int(k_components)
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = vt[:k].copy()
    for row in components:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    transform = PcaTransform(mean, components)
    reduced = ReducedDataset(transform.apply(x), train.labels, (PCA_TAG, (("k", k),)))
    return reduced, transform


# ---------------------------------------------------------------------------
# classifiers
# ---------------------------------------------------------------------------

def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _class_groups(x, y):
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least 2 classes in the training data")
    return classes, [x[y == c] for c in classes]


def _ridged(cov, ridge, name):
    p = cov.shape[0]
    if ridge > 0:
        cov = cov + ridge * (np.trace(cov) / p) * np.eye(p)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            f"{name} covariance is singular; increase the ridge"
        ) from exc
    return cov, chol


class LdaClassifier:
    """Gaussian classes with a shared (pooled, ridge-regularized) covariance."""

    def __init__(self, x, y, ridge=1e-6):
        classes, groups = _class_groups(x, y)
        p = x.shape[1]
        pooled = np.zeros((p, p))
        for g in groups:
            if g.shape[0] < 2:
                continue
            c = g - g.mean(axis=0)
            pooled += c.T @ c
        denom = max(x.shape[0] - classes.size, 1)
        pooled /= denom
        cov, _ = _ridged(pooled, ridge, "pooled")
        means = np.vstack([g.mean(axis=0) for g in groups])
        inv_means = np.linalg.solve(cov, means.T)
        self.classes_ = classes
        self.n_features = p
        self._w = inv_means  # (p, K)
        self._b = -0.5 * np.sum(means.T * inv_means, axis=0) + np.log(
            np.array([g.shape[0] for g in groups]) / x.shape[0]
        )

    def predict_proba(self, x):
        return _softmax(np.asarray(x) @ self._w + self._b)

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


class QdaClassifier:
    """Gaussian classes with per-class ridge-regularized covariances."""

    def __init__(self, x, y, ridge=1e-6):
        classes, groups = _class_groups(x, y)
        self.classes_ = classes
        self.n_features = x.shape[1]
        self._means, self._chols, self._logdets, self._logpriors = [], [], [], []
        for c, g in zip(classes, groups):
            if g.shape[0] < 2:
                raise SingularCovarianceError(f"class {c} has fewer than 2 samples")
            cov = np.cov(g, rowvar=False, ddof=1)
            cov = np.atleast_2d(cov)
            _, chol = _ridged(cov, ridge, f"class {c}")
            self._means.append(g.mean(axis=0))
            self._chols.append(chol)
            self._logdets.append(2.0 * np.sum(np.log(np.diag(chol))))
            self._logpriors.append(np.log(g.shape[0] / x.shape[0]))

    def predict_proba(self, x):
        x = np.asarray(x, dtype=np.float64)
        logits = np.empty((x.shape[0], self.classes_.size))
        for i in range(self.classes_.size):
            z = np.linalg.solve(self._chols[i], (x - self._means[i]).T)
            quad = np.sum(z * z, axis=0)
            logits[:, i] = self._logpriors[i] - 0.5 * (self._logdets[i] + quad)
        return _softmax(logits)

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


class GaussianNbClassifier:
    """Independent-feature Gaussian likelihoods with a variance floor."""

    def __init__(self, x, y, var_floor=1e-9):
        classes, groups = _class_groups(x, y)
        self.classes_ = classes
        self.n_features = x.shape[1]
        self._means = np.vstack([g.mean(axis=0) for g in groups])
        variances = np.vstack([g.var(axis=0) for g in groups])
        variances += var_floor * max(float(variances.max()), 1.0)
        self._vars = variances
        self._logpriors = np.log(np.array([g.shape[0] for g in groups]) / x.shape[0])

    def predict_proba(self, x):
        x = np.asarray(x, dtype=np.float64)
        logits = np.empty((x.shape[0], self.classes_.size))
        for i in range(self.classes_.size):
            ll = -0.5 * np.sum(
                np.log(2.0 * np.pi * self._vars[i])
                + (x - self._means[i]) ** 2 / self._vars[i],
                axis=1,
            )
            logits[:, i] = self._logpriors[i] + ll
        return _softmax(logits)

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


class KnnClassifier:
    """Euclidean k-nearest neighbors; probabilities are vote fractions.
    Distance ties resolve toward the lowest training index."""

    def __init__(self, x, y, n_neighbors=5):
        if int(n_neighbors) != n_neighbors or n_neighbors < 1 or n_neighbors > x.shape[0]:
            raise ValueError("n_neighbors must be in [1; n_train]")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("need at least 2 classes in the training data")
        self.n_features = x.shape[1]
        self._x = x
        self._y = y
        self._k = int(n_neighbors)

    def predict_proba(self, x):
        x = np.asarray(x, dtype=np.float64)
        d2 = (
            np.sum(x * x, axis=1)[:, None]
            - 2.0 * x @ self._x.T
            + np.sum(self._x * self._x, axis=1)[None, :]
        )
        nearest = np.argsort(d2, axis=1, kind="stable")[:, : self._k]
        votes = self._y[nearest]
        proba = np.empty((x.shape[0], self.classes_.size))
        for i, c in enumerate(self.classes_):
            proba[:, i] = np.sum(votes == c, axis=1) / self._k
        return proba

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


class LogisticClassifier:
    """Multinomial ridge logistic regression, fit by deterministic full-batch
    gradient descent (Lipschitz step size) to a fixed gradient tolerance.
    Features are standardized internally on the fitting data."""

    def __init__(self, x, y, l2=1e-2, tol=1e-5, max_iter=3000):
        classes, _ = _class_groups(x, y)
        self.classes_ = classes
        self.n_features = x.shape[1]
        self._mu = x.mean(axis=0)
        sd = x.std(axis=0)
        sd[sd == 0.0] = 1.0
        self._sd = sd
        xs = (x - self._mu) / self._sd
        xb = np.column_stack([xs, np.ones(x.shape[0])])
        n, pb = xb.shape
        k = classes.size
        onehot = (y[:, None] == classes[None, :]).astype(np.float64)
        lip = 0.5 * np.linalg.norm(xb, 2) ** 2 / n + l2
        step = 1.0 / lip
        w = np.zeros((k, pb))
        penalty = np.ones(pb)
        penalty[-1] = 0.0  # bias unpenalized
        for _ in range(int(max_iter)):
            proba = _softmax(xb @ w.T)
            grad = (proba - onehot).T @ xb / n + l2 * w * penalty
            if np.abs(grad).max() <= tol:
                break
            w -= step * grad
        self._w = w

    def predict_proba(self, x):
        xs = (np.asarray(x, dtype=np.float64) - self._mu) / self._sd
        xb = np.column_stack([xs, np.ones(xs.shape[0])])
        return _softmax(xb @ self._w.T)

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


_KINDS = {
    "lda": (LdaClassifier, {"ridge": 1e-6}),
    "qda": (QdaClassifier, {"ridge": 1e-6}),
    "gaussian_nb": (GaussianNbClassifier, {}),
    "knn": (KnnClassifier, {"n_neighbors": 5}),
    "logistic": (LogisticClassifier, {"l2": 1e-2}),
}


def train_classifier(kind, train, hyper=None, rng_seed=0):
    """Fit one of the menu classifiers on a ReducedDataset. All classifiers
    expose predict and per-class membership probabilities; rng_seed is
    accepted for interface stability (the menu is deterministic)."""
    if kind not in _KINDS:
        raise ValueError(f"unknown classifier kind {kind!r}; choose from {sorted(_KINDS)}")
    cls, defaults = _KINDS[kind]
    params = dict(defaults)
    if hyper:
        params.update(hyper)
    return cls(train.features, train.labels, **params)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

def _check_compatible(models):
    if len(models) == 0:
        raise ValueError("need at least one model")
    ref = models[0]
    for m in models[1:]:
        if not np.array_equal(m.classes_, ref.classes_):
            raise ValueError("models disagree on the class set")
        if m.n_features != ref.n_features:
            raise ValueError("models disagree on the input dimension")


class SoftVoteEnsemble:
    """Mean of member membership probabilities (optionally weighted)."""

    def __init__(self, models, weights=None):
        _check_compatible(models)
        self.classes_ = models[0].classes_
        self.n_features = models[0].n_features
        self._models = list(models)
        if weights is None:
            weights = np.ones(len(models))
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(models),) or weights.sum() <= 0:
            raise ValueError("weights must be one positive-sum value per model")
        self._weights = weights / weights.sum()

    def predict_proba(self, x):
        out = self._weights[0] * self._models[0].predict_proba(x)
        for w, m in zip(self._weights[1:], self._models[1:]):
            out += w * m.predict_proba(x)
        return out

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


def ensemble_average(models, weights=None):
    return SoftVoteEnsemble(models, weights)


class StackedEnsemble:
    """Base models feed their membership probabilities to a ridge logistic
    meta-learner fit on the validation split (never on training rows)."""

    def __init__(self, models, meta):
        self.classes_ = models[0].classes_
        self.n_features = models[0].n_features
        self._models = list(models)
        self._meta = meta

    def _meta_features(self, x):
        return np.hstack([m.predict_proba(x) for m in self._models])

    def predict_proba(self, x):
        return self._meta.predict_proba(self._meta_features(x))

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


def stack(models, meta_hyper, train, validation):
    """Stack base models with a ridge logistic meta-learner. The meta-learner
    is fit on validation-split probabilities; the train argument is part of
    the interface but never read during meta fitting, which is what keeps
    the stack leakage-free."""
    if len(models) < 2:
        raise ValueError("stacking needs at least 2 base models")
    _check_compatible(models)
    present = np.unique(validation.labels)
    missing = np.setdiff1d(models[0].classes_, present)
    if missing.size:
        raise InvalidStateError(f"validation split is missing classes {missing.tolist()}")
    meta_x = np.hstack([m.predict_proba(validation.features) for m in models])
    meta = LogisticClassifier(meta_x, validation.labels, **(meta_hyper or {"l2": 1e-2}))
    return StackedEnsemble(models, meta)


# ---------------------------------------------------------------------------
# evaluation harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    classifiers: tuple = ("lda", "qda", "gaussian_nb", "knn", "logistic")
    pca_components: int = 10
    ridge_grid: tuple = (1e-8, 1e-6, 1e-4, 1e-2)
    knn_grid: tuple = (1, 3, 5, 7, 11)
    logistic_l2_grid: tuple = (1e-3, 1e-2, 1e-1)
    include_ensembles: bool = True
    rng_seed: int = 0


@dataclass
class EvaluationReport:
    rows: list
    metadata: dict

    def accuracy(self, classifier, reducer, augmented):
        for row in self.rows:
            if (row["classifier"], row["reducer"], row["augmented"]) == (
                classifier, reducer, augmented,
            ):
                return row["accuracy"]
        raise KeyError((classifier, reducer, augmented))


_GRIDS = {
    "lda": ("ridge", "ridge_grid"),
    "qda": ("ridge", "ridge_grid"),
    "gaussian_nb": (None, None),
    "knn": ("n_neighbors", "knn_grid"),
    "logistic": ("l2", "logistic_l2_grid"),
}

_CELL_ERRORS = (
    SingularCovarianceError,
    NonconvergenceError,
    DegenerateInputError,
    np.linalg.LinAlgError,
)


def _fit_tuned(kind, xtr, ytr, xval, yval, cfg, audit):
    """Grid search on the validation split; ties keep the first grid point."""
    param, grid_name = _GRIDS[kind]
    grid = getattr(cfg, grid_name) if grid_name else (None,)
    best = None
    for value in grid:
        hyper = {} if param is None else {param: value}
        if kind == "knn" and value is not None and value > xtr.shape[0]:
            continue
        model = train_classifier(kind, ReducedDataset(xtr, ytr), hyper, cfg.rng_seed)
        audit["fit_rows"] += xtr.shape[0]
        acc = float(np.mean(model.predict(xval) == yval))
        if best is None or acc > best[0]:
            best = (acc, model, hyper)
    if best is None:
        raise InvalidStateError(f"no feasible hyperparameter for {kind}")
    return best[1], best[2]


def run_matrix_evaluation(ds, mesh, fs_features, augmented, cfg=EvalConfig()):
    """Full factorial {classifiers} x {pca, feature selection} x {with, without
    augmentation} under identical splits and seeds. Reducers are fit on the
    train split only; hyperparameters are tuned on the validation split;
    accuracies are reported on the untouched test split. Failed cells are
    recorded, not dropped."""
    if ds.labels is None or ds.split_tags is None:
        raise ValueError("evaluation needs a labeled dataset with split tags")
    train_view = ds.split_view("train")
    val_view = ds.split_view("val")
    test_view = ds.split_view("test")

    audit = {"fit_rows": 0, "val_rows_in_fit": 0, "test_rows_in_fit": 0}
    reducers = {}

    pca_train, transform = pca_fit_transform(train_view, cfg.pca_components)
    reducers[PCA_TAG] = {
        "train": pca_train.features,
        "val": transform.apply(val_view.samples),
        "test": transform.apply(test_view.samples),
    }
    cols = fs_features.columns()
    reducers[FS_TAG] = {
        "train": train_view.samples[:, cols],
        "val": val_view.samples[:, cols],
        "test": test_view.samples[:, cols],
    }

    rows = []
    tuned_da_models = {}
    for reducer, feats in reducers.items():
        aug_feats = aug_labels = None
        if augmented is not None:
            aug_feats = apply_weights(
                augmented.entries, augmented.sample_entries, augmented.weights,
                feats["train"],
            )
            aug_labels = augmented.labels
        for use_da in (False, True):
            if use_da and augmented is None:
                continue
            if use_da:
                xtr = np.vstack([feats["train"], aug_feats])
                ytr = np.concatenate([train_view.labels, aug_labels])
            else:
                xtr, ytr = feats["train"], train_view.labels
            for kind in cfg.classifiers:
                try:
                    model, hyper = _fit_tuned(
                        kind, xtr, ytr, feats["val"], val_view.labels, cfg, audit
                    )
                    acc = float(np.mean(model.predict(feats["test"]) == test_view.labels))
                    rows.append({
                        "classifier": kind, "reducer": reducer, "augmented": use_da,
                        "accuracy": acc, "hyper": hyper, "status": "ok",
                    })
                    if use_da:
                        tuned_da_models.setdefault(reducer, []).append(model)
                except _CELL_ERRORS as exc:
                    rows.append({
                        "classifier": kind, "reducer": reducer, "augmented": use_da,
                        "accuracy": None, "hyper": None,
                        "status": f"failed: {exc}",
                    })

    if cfg.include_ensembles and augmented is not None:
        for reducer, models in tuned_da_models.items():
            feats = reducers[reducer]
            if len(models) >= 2:
                for name, builder in (
                    ("ensemble_average", lambda ms: ensemble_average(ms)),
                    ("stacking", lambda ms: stack(
                        ms, {"l2": 1e-2}, ReducedDataset(feats["train"], train_view.labels),
                        ReducedDataset(feats["val"], val_view.labels))),
                ):
                    try:
                        ens = builder(models)
                        if name == "stacking":
                            audit["val_rows_in_fit"] += val_view.n_samples
                        acc = float(np.mean(ens.predict(feats["test"]) == test_view.labels))
                        rows.append({
                            "classifier": name, "reducer": reducer, "augmented": True,
                            "accuracy": acc, "hyper": None, "status": "ok",
                        })
                    except _CELL_ERRORS as exc:
                        rows.append({
                            "classifier": name, "reducer": reducer, "augmented": True,
                            "accuracy": None, "hyper": None, "status": f"failed: {exc}",
                        })

    gains = {}
    for kind in cfg.classifiers:
        for reducer in reducers:
            try:
                with_da = next(r for r in rows if r["classifier"] == kind
                               and r["reducer"] == reducer and r["augmented"])
                without = next(r for r in rows if r["classifier"] == kind
                               and r["reducer"] == reducer and not r["augmented"])
            except StopIteration:
                continue
            if with_da["accuracy"] is not None and without["accuracy"] is not None:
                gains[f"{kind}|{reducer}"] = with_da["accuracy"] - without["accuracy"]
    metadata = {
        "rng_seed": cfg.rng_seed,
        "pca_components": cfg.pca_components,
        "gains": gains,
        "mean_gain": float(np.mean(list(gains.values()))) if gains else None,
        "fit_audit": audit,
    }
    return EvaluationReport(rows, metadata)
