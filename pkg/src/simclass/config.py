"""Flat key-value configuration files: dotted section keys, one `key = value`
per line, `#` comments. Every artifact records the hash of the effective
config that produced it, which is what makes pipeline chains tamper-evident.
"""

import hashlib


class ConfigError(ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


# keys that must appear explicitly in every config file
REQUIRED = ("seed", "data.n_samples", "mesh.nx", "mesh.ny", "labeling.n_clusters")

DEFAULTS = {
    "mesh.lx": "1.0",
    "mesh.ly": "0.8",
    "field.n_modes": "10",
    "field.smoothness": "0.15",
    "field.coefficient_scale": "1.0",
    "field.scale_decay": "0.55",
    "field.reference_amplitude": "1.0",
    "field.reference_offset": "0.5",
    "split.train": "0.6",
    "split.val": "0.2",
    "split.test": "0.2",
    "labeling.n_t": "5",
    "labeling.diffusivity": "0.01",
    "labeling.kappa": "1.0",
    "labeling.rank_tol": "1e-10",
    "labeling.max_iter": "100",
    "fs.k_neighbors": "3",
    "fs.n_probe_nodes": "8",
    "fs.n_bins": "10",
    "fs.bin_tol": "0.1",
    "fs.pairs_per_bin": "60",
    "fs.window": "10",
    "fs.stop_tol": "1e-3",
    "fs.max_features": "30",
    "fs.min_relevance": "0.0",
    "augment.n_seeds": "60",
    "augment.p_max": "10",
    "augment.d": "5",
    "augment.factor": "9",
    "augment.eps1": "0.3",
    "augment.eps2": "0.05",
    "augment.eps_da": "1e-6",
    "eval.pca_components": "10",
    "eval.include_ensembles": "1",
}


def parse_config(path):
    """Parse and validate a config file against the known key set; returns
    the defaults overlaid with the file's entries (all values as strings)."""
    known = set(DEFAULTS) | set(REQUIRED)
    out = dict(DEFAULTS)
    seen = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}", f"expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(key, "unknown key")
            if key in seen:
                raise ConfigError(key, "duplicate key")
            if value == "":
                raise ConfigError(key, "empty value")
            seen.add(key)
            out[key] = value
    for key in REQUIRED:
        if key not in seen:
            raise ConfigError(key, "missing required key")
    return out


def get_int(cfg, key):
    try:
        return int(cfg[key])
    except KeyError:
        raise ConfigError(key, "missing key") from None
    except ValueError:
        raise ConfigError(key, f"not an integer: {cfg[key]!r}") from None


def get_float(cfg, key):
    try:
        return float(cfg[key])
    except KeyError:
        raise ConfigError(key, "missing key") from None
    except ValueError:
        raise ConfigError(key, f"not a number: {cfg[key]!r}") from None


def get_bool(cfg, key):
    v = cfg.get(key, "0").strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"not a boolean: {cfg[key]!r}")


def config_hash(cfg):
    """Hash of the effective (post-override, post-default) configuration."""
    canonical = "\n".join(f"{k} = {cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
