"""Pipeline orchestration: each stage is a subcommand that reads the
artifacts of earlier stages, validates their config hashes through the
output directory's manifest, and writes its own artifacts.

Exit codes: 0 success, 2 config error, 3 artifact-compatibility error,
4 numerical failure.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import augment as aug_mod
from . import classify, config, feature_selection, labeling, synth
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    EmptySeedError,
    FitError,
    InvalidStateError,
    NonconvergenceError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ARTIFACT = 3
EXIT_NUMERIC = 4

MESH = "mesh.txt"
DATASET = "dataset.txt"
TAGS = "split_tags.txt"
LABELS = "labels.txt"
DELTA = "delta.txt"
CLUSTERING = "clustering.json"
SELECTORS = "selectors.json"
AUGMENTED = "augmented.txt"
PROVENANCE = "augmented_provenance.json"
REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"
AUDIT = "audit.json"
MANIFEST = "manifest.json"

# per-stage seed streams derived from the global config seed
SEED_MODEL, SEED_SAMPLING, SEED_SPLIT, SEED_LABELING = 1, 2, 3, 4
SEED_FS, SEED_GEOMETRIC, SEED_AUGMENT, SEED_EVAL, SEED_AUDIT = 5, 6, 7, 8, 9


class ArtifactMismatch(RuntimeError):
    pass


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_manifest(out):
    path = Path(out) / MANIFEST
    if path.exists():
        return json.loads(path.read_text())
    return {"config_hash": None, "artifacts": {}}


def _require_inputs(out, manifest, names, chash, force):
    if manifest["config_hash"] is None:
        raise ArtifactMismatch("no manifest in the output directory; run `generate` first")
    if manifest["config_hash"] != chash and not force:
        raise ArtifactMismatch(
            f"artifacts were produced with config {manifest['config_hash']}, current "
            f"config is {chash} (use --force to mix)"
        )
    for name in names:
        entry = manifest["artifacts"].get(name)
        path = Path(out) / name
        if entry is None or not path.exists():
            raise ArtifactMismatch(f"missing input artifact {name}; run earlier stages first")
        if _sha256(path) != entry["sha256"] and not force:
            raise ArtifactMismatch(f"{name} changed since it was produced (use --force to accept)")


def _record_outputs(out, manifest, chash, stage, names):
    manifest["config_hash"] = chash
    for name in names:
        manifest["artifacts"][name] = {"sha256": _sha256(Path(out) / name), "stage": stage}
    (Path(out) / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _effective_config(args):
    cfg = config.parse_config(args.config)
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    return cfg, config.config_hash(cfg)


def _load_labeled_dataset(out):
    samples = synth.load_matrix(Path(out) / DATASET)
    labels = synth.load_labels(Path(out) / LABELS)
    tags = synth.load_tags(Path(out) / TAGS)
    return synth.FieldDataset(samples, labels, tags)


def _train_block(ds):
    """Train rows must be the leading block (the renumbering convention);
    downstream artifacts index into that block."""
    idx = ds.split_indices(synth.TRAIN)
    if idx.size == 0 or not np.array_equal(idx, np.arange(idx.size)):
        raise ArtifactMismatch("split tags are not renumbered train-first")
    return idx


def _labeling_params(cfg):
    return {
        "n_t": config.get_int(cfg, "labeling.n_t"),
        "diffusivity": config.get_float(cfg, "labeling.diffusivity"),
        "kappa": config.get_float(cfg, "labeling.kappa"),
        "rank_tol": config.get_float(cfg, "labeling.rank_tol"),
    }


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def cmd_generate(args):
    cfg, chash = _effective_config(args)
    seed = config.get_int(cfg, "seed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh = synth.build_rectangular_mesh(
        config.get_int(cfg, "mesh.nx"), config.get_int(cfg, "mesh.ny"),
        config.get_float(cfg, "mesh.lx"), config.get_float(cfg, "mesh.ly"),
    )
    n_modes = config.get_int(cfg, "field.n_modes")
    scales = config.get_float(cfg, "field.coefficient_scale") * (
        config.get_float(cfg, "field.scale_decay") ** np.arange(n_modes)
    )
    model = synth.build_field_model(
        mesh,
        n_modes,
        config.get_float(cfg, "field.smoothness"),
        (seed, SEED_MODEL),
        coefficient_scale=scales,
        reference_amplitude=config.get_float(cfg, "field.reference_amplitude"),
        reference_offset=config.get_float(cfg, "field.reference_offset"),
    )
    ds = synth.sample_fields(model, config.get_int(cfg, "data.n_samples"), (seed, SEED_SAMPLING))
    ratios = tuple(config.get_float(cfg, f"split.{k}") for k in ("train", "val", "test"))
    ds = synth.split_dataset(ds, ratios, (seed, SEED_SPLIT))
    synth.save_mesh(out / MESH, mesh)
    synth.save_matrix(out / DATASET, ds.samples)
    synth.save_tags(out / TAGS, ds.split_tags)
    manifest = _load_manifest(out)
    _record_outputs(out, manifest, chash, "generate", [MESH, DATASET, TAGS])
    counts = {t: int(np.sum(ds.split_tags == t)) for t in (synth.TRAIN, synth.VAL, synth.TEST)}
    print(
        f"generate ok config={chash} dataset={ds.n_samples}x{ds.n_features} "
        f"splits={counts['train']}/{counts['val']}/{counts['test']}"
    )
    return EXIT_OK


def cmd_label(args):
    cfg, chash = _effective_config(args)
    seed = config.get_int(cfg, "seed")
    out = Path(args.out)
    manifest = _load_manifest(out)
    _require_inputs(out, manifest, [MESH, DATASET, TAGS], chash, args.force)
    mesh = synth.load_mesh(out / MESH)
    ds = synth.FieldDataset(synth.load_matrix(out / DATASET), None, synth.load_tags(out / TAGS))
    labeled, delta, clustering = labeling.label_dataset(
        ds, mesh,
        k=config.get_int(cfg, "labeling.n_clusters"),
        rng_seed=(seed, SEED_LABELING),
        max_iter=config.get_int(cfg, "labeling.max_iter"),
        **_labeling_params(cfg),
    )
    synth.save_labels(out / LABELS, labeled.labels)
    synth.save_matrix(out / DELTA, delta.values)
    _write_json(out / CLUSTERING, {
        "medoids": clustering.medoid_indices.tolist(),
        "assignments": clustering.assignments.tolist(),
        "objective": clustering.objective,
    })
    _record_outputs(out, manifest, chash, "label", [LABELS, DELTA, CLUSTERING])
    sizes = np.bincount(labeled.labels)[1:].tolist()
    print(f"label ok config={chash} clusters={sizes} objective={clustering.objective:.6g}")
    return EXIT_OK


def _doe_bins(mesh, cfg):
    nx, ny, dx, dy = synth.grid_info(mesh)
    spacings = [s for s in (dx, dy) if s > 0]
    r_min = min(spacings)
    diameter = float(np.linalg.norm(mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0)))
    n_bins = config.get_int(cfg, "fs.n_bins")
    base = config.get_int(cfg, "fs.pairs_per_bin")
    rs = np.geomspace(r_min, 0.5 * diameter, n_bins)
    # more pairs at short range, where the decay is steep
    return tuple((float(r), max(6, base // (j + 1))) for j, r in enumerate(rs))


def cmd_select_features(args):
    cfg, chash = _effective_config(args)
    seed = config.get_int(cfg, "seed")
    out = Path(args.out)
    manifest = _load_manifest(out)
    _require_inputs(out, manifest, [MESH, DATASET, TAGS, LABELS], chash, args.force)
    mesh = synth.load_mesh(out / MESH)
    ds = _load_labeled_dataset(out)
    _train_block(ds)
    train = ds.split_view(synth.TRAIN)
    k_neighbors = config.get_int(cfg, "fs.k_neighbors")

    doe = feature_selection.build_doe(
        mesh, config.get_int(cfg, "fs.n_probe_nodes"), _doe_bins(mesh, cfg),
        config.get_float(cfg, "fs.bin_tol"), (seed, SEED_FS),
    )
    from .mutual_info import mi_feature_feature_exact

    mi_values = np.array([
        mi_feature_feature_exact(train.samples[:, i], train.samples[:, j])
        for i, j in doe.pairs
    ])
    model = feature_selection.fit_redundancy_model(doe, mi_values)
    stop = feature_selection.StoppingConfig(
        window=config.get_int(cfg, "fs.window"),
        tol=config.get_float(cfg, "fs.stop_tol"),
        max_features=config.get_int(cfg, "fs.max_features"),
        min_relevance=config.get_float(cfg, "fs.min_relevance"),
    )
    relevances = feature_selection.relevance_scan(train, k_neighbors)
    geo_mrmr = feature_selection.geostatistical_mrmr(
        train, mesh, model, stop, k_neighbors, relevances=relevances)
    n_f = len(geo_mrmr)
    selectors = [
        geo_mrmr,
        feature_selection.mi_filter(train, n_f, k_neighbors, relevances=relevances),
        feature_selection.geometric_filter(mesh, n_f, (seed, SEED_GEOMETRIC)),
    ]
    payload = {"config_hash": chash, "n_features": n_f, "redundancy_model": {
        "i_inf": model.i_inf, "gamma1": model.gamma1, "gamma2": model.gamma2,
        "r1": model.r1, "r2": model.r2, "alpha1": model.alpha1, "alpha2": model.alpha2,
    }, "selectors": []}
    lines = []
    for sel in selectors:
        metrics = feature_selection.selector_metrics(train, mesh, model, sel.features,
                                                     k_neighbors)
        payload["selectors"].append({
            "method": sel.method,
            "indices": list(sel.features.indices),
            "objective_trace": list(sel.objective_trace),
            "metrics": metrics,
        })
        lines.append(
            f"  {sel.method:<20} D={metrics['D']:.4f} R_exact={metrics['R_exact']:.4f} "
            f"R_model={metrics['R_model']:.4f}"
        )
    _write_json(out / SELECTORS, payload)
    _record_outputs(out, manifest, chash, "select-features", [SELECTORS])
    print(f"select-features ok config={chash} n_features={n_f}")
    for line in lines:
        print(line)
    return EXIT_OK


def _load_selected_features(out):
    payload = json.loads((Path(out) / SELECTORS).read_text())
    by_method = {s["method"]: s for s in payload["selectors"]}
    sel = by_method["geostatistical_mrmr"]
    return feature_selection.FeatureSet(tuple(sel["indices"]))


def _train_medoids(delta_train, labels_train, n_clusters):
    """Within-train class centers: the train point of each class minimizing
    the total dissimilarity to its classmates (the global medoid may sit in
    the validation or test split after renumbering)."""
    medoids = []
    for c in range(1, n_clusters + 1):
        members = np.flatnonzero(labels_train == c)
        if members.size == 0:
            raise DegenerateInputError(f"class {c} has no training points")
        costs = delta_train[np.ix_(members, members)].sum(axis=0)
        medoids.append(int(members[int(np.argmin(costs))]))
    return medoids


def cmd_augment(args):
    cfg, chash = _effective_config(args)
    seed = config.get_int(cfg, "seed")
    out = Path(args.out)
    manifest = _load_manifest(out)
    _require_inputs(out, manifest, [DATASET, TAGS, LABELS, DELTA, CLUSTERING, SELECTORS],
                    chash, args.force)
    ds = _load_labeled_dataset(out)
    train_idx = _train_block(ds)
    features = _load_selected_features(out)
    delta = synth.load_matrix(out / DELTA)
    delta_train = delta[np.ix_(train_idx, train_idx)]
    train = ds.split_view(synth.TRAIN)
    train_reduced = synth.FieldDataset(train.samples[:, features.columns()], train.labels)

    n_clusters = config.get_int(cfg, "labeling.n_clusters")
    medoids = _train_medoids(delta_train, train.labels, n_clusters)
    acfg = aug_mod.AugmentConfig(
        n_seeds=config.get_int(cfg, "augment.n_seeds"),
        p_max=config.get_int(cfg, "augment.p_max"),
        d=config.get_int(cfg, "augment.d"),
        n_augmented=config.get_int(cfg, "augment.factor") * train.n_samples,
        eps1=config.get_float(cfg, "augment.eps1"),
        eps2=config.get_float(cfg, "augment.eps2"),
        eps_da=config.get_float(cfg, "augment.eps_da"),
        rng_seed=seed + SEED_AUGMENT,
    )
    registry = aug_mod.build_registry(train_reduced, delta_train, medoids, acfg)
    if registry.n_entries == 0:
        raise InvalidStateError("no pure sets found in any class")
    generated = aug_mod.generate_augmented(registry, train_reduced, acfg)
    synth.save_matrix(out / AUGMENTED, generated.samples)
    _write_json(out / PROVENANCE, {
        "config_hash": chash,
        "entries": [
            {"class": int(k), "slot": int(slot), "members": [int(m) for m in members]}
            for k, slot, members in generated.entries
        ],
        "samples": [
            {"entry": int(e), "weights": [float(v) for v in w]}
            for e, w in zip(generated.sample_entries, generated.weights)
        ],
    })
    _record_outputs(out, manifest, chash, "augment", [AUGMENTED, PROVENANCE])
    per_class = {int(k): 0 for k in sorted(registry.sets_by_class)}
    for k, _, _ in generated.entries:
        per_class[int(k)] += 1
    print(
        f"augment ok config={chash} pure_sets={per_class} "
        f"n_augmented={generated.n_samples}"
    )
    return EXIT_OK


def _load_augmented(out):
    payload = json.loads((Path(out) / PROVENANCE).read_text())
    samples = synth.load_matrix(Path(out) / AUGMENTED)
    entries = tuple(
        (e["class"], e["slot"], tuple(e["members"])) for e in payload["entries"]
    )
    sample_entries = np.array([s["entry"] for s in payload["samples"]], dtype=np.int64)
    weights = tuple(np.array(s["weights"]) for s in payload["samples"])
    labels = np.array([entries[e][0] for e in sample_entries], dtype=np.int64)
    return aug_mod.AugmentedDataset(samples, labels, entries, sample_entries, weights)


def cmd_evaluate(args):
    cfg, chash = _effective_config(args)
    seed = config.get_int(cfg, "seed")
    out = Path(args.out)
    manifest = _load_manifest(out)
    _require_inputs(out, manifest,
                    [MESH, DATASET, TAGS, LABELS, SELECTORS, AUGMENTED, PROVENANCE],
                    chash, args.force)
    mesh = synth.load_mesh(out / MESH)
    ds = _load_labeled_dataset(out)
    _train_block(ds)
    features = _load_selected_features(out)
    augmented = _load_augmented(out)
    ecfg = classify.EvalConfig(
        pca_components=config.get_int(cfg, "eval.pca_components"),
        include_ensembles=config.get_bool(cfg, "eval.include_ensembles"),
        rng_seed=seed + SEED_EVAL,
    )
    report = classify.run_matrix_evaluation(ds, mesh, features, augmented, ecfg)
    with open(out / REPORT_CSV, "w") as fh:
        fh.write("classifier,reducer,augmented,accuracy\n")
        for row in report.rows:
            acc = "" if row["accuracy"] is None else f"{row['accuracy']:.6f}"
            fh.write(f"{row['classifier']},{row['reducer']},{str(row['augmented']).lower()},{acc}\n")
    _write_json(out / REPORT_JSON, {
        "config_hash": chash,
        "rows": report.rows,
        "metadata": report.metadata,
    })
    _record_outputs(out, manifest, chash, "evaluate", [REPORT_CSV, REPORT_JSON])
    mg = report.metadata["mean_gain"]
    print(f"evaluate ok config={chash} cells={len(report.rows)} "
          f"mean_gain={'n/a' if mg is None else f'{mg:+.4f}'}")
    return EXIT_OK


def cmd_audit_augmentation(args):
    cfg, chash = _effective_config(args)
    seed = config.get_int(cfg, "seed")
    out = Path(args.out)
    manifest = _load_manifest(out)
    _require_inputs(out, manifest,
                    [MESH, DATASET, TAGS, LABELS, CLUSTERING, AUGMENTED, PROVENANCE],
                    chash, args.force)
    mesh = synth.load_mesh(out / MESH)
    ds = _load_labeled_dataset(out)
    _train_block(ds)
    augmented = _load_augmented(out)
    clustering = json.loads((Path(out) / CLUSTERING).read_text())
    medoid_rows = np.array(clustering["medoids"], dtype=np.int64)
    assignments = np.array(clustering["assignments"], dtype=np.int64)
    params = _labeling_params(cfg)
    dt = labeling.shared_time_step(ds, mesh, params["diffusivity"], params["kappa"])
    result = aug_mod.audit_relabel_fidelity(
        augmented, ds.split_view(synth.TRAIN), mesh,
        ds.samples[medoid_rows], assignments[medoid_rows],
        params["n_t"], params["diffusivity"], params["kappa"], dt,
        rank_tol=params["rank_tol"],
        sample_size=args.sample_size, rng_seed=seed + SEED_AUDIT,
    )
    result["config_hash"] = chash
    _write_json(out / AUDIT, result)
    _record_outputs(out, manifest, chash, "audit-augmentation", [AUDIT])
    print(f"audit-augmentation ok config={chash} fidelity={result['fidelity']:.4f} "
          f"n={result['n_audited']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="simclass",
        description="Simulation-data classification pipeline: generate, label, "
                    "select-features, augment, evaluate, audit-augmentation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    stages = {
        "generate": cmd_generate,
        "label": cmd_label,
        "select-features": cmd_select_features,
        "augment": cmd_augment,
        "evaluate": cmd_evaluate,
        "audit-augmentation": cmd_audit_augmentation,
    }
    for name, fn in stages.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="artifact directory")
        p.add_argument("--force", action="store_true",
                       help="accept artifacts from a different config hash")
        if name == "audit-augmentation":
            p.add_argument("--sample-size", type=int, default=200, dest="sample_size")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactMismatch, FileNotFoundError) as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (NonconvergenceError, DegenerateInputError, FitError, ConfigurationError,
            InvalidStateError, EmptySeedError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
