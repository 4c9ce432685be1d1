"""Run configuration: the complete default schema and validation.

A user config is a JSON object that overrides any subset of ``DEFAULTS``.
Unknown keys and values whose type differs from the default are rejected
with the dotted path of the offending field.
"""

import copy
import json

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "model": {
        "name": "1d",            # "1d" (three-component mixture) or "5d"
        "theta": [0.05],         # generating parameter point
        "projection": None,      # JSON file with a 5x5 "matrix"; None uses the shipped one
    },
    "n": 500,                    # samples for simulate / infer datasets
    "inputs": {
        "data": None,            # .bin or .csv sample file; None simulates from model.theta
        "classifier": None,      # classifier JSON
        "calibration": None,     # calibration JSON for ratio.theta0/theta1
        "decomposed": None,      # decomposed-estimator JSON
    },
    "classifier": {
        "hidden": [16, 16],
        "loss": "cross_entropy",
        "learning_rate": 0.01,
        "lr_decay": 0.9,
        "epochs": 20,
        "batch_size": 256,
        "l2": 0.0,
        "validation_fraction": 0.05,
        "tol": 0.001,
    },
    "training": {
        "mode": "parameterized",  # "parameterized" or "decomposed" (1d only)
        "n_train": 200000,
        "prior0": {"kind": "uniform", "low": [0.0], "high": [0.3]},
        "prior1": {"kind": "point", "theta": [0.0]},
    },
    "calibration": {
        "method": "histogram",    # "histogram", "kde" or "isotonic"
        "n_calibration": 100000,
        "bins": 50,
        "eps": 1e-06,
        "bandwidth": None,
        "common_random_numbers": True,
    },
    "ratio": {
        "estimator": "approximate",  # "approximate", "decomposed" or "oracle"
        "theta0": [0.05],
        "theta1": [0.0],
        "n_points": 10000,
        "density_points": 201,
    },
    "infer": {
        "method": "grid",         # "grid" or "bayesopt"
        "theta_ref": [0.0],
        "grid": {"low": [0.0], "high": [0.3], "num": [601]},
        "refine": True,
        "budget": 50,
        "n_init": 10,
    },
    "ensemble": {
        "theta_true": [0.05],
        "replicates": 1000,
        "n_per_dataset": 500,
        "max_failures": None,
    },
    "diagnose": {
        "regimes": ["well", "poorly_trained", "poorly_calibrated"],
        "require_pass": ["well"],
        "references": [[0.0, 0.0], [0.5, -0.5], [1.5, -1.5]],
        "grid": {"low": [0.5, -1.0], "high": [1.5, -1.0], "num": [21, 1]},
        "band_width": 2.0,
        "max_outside": 0.2,
        "roc_theta0": [1.0, -1.0],
        "roc_theta1": [0.0, 0.0],
        "roc_n": 10000,
        "roc_tolerance": 0.05,
        "poor_bins": 5,
        "poor_n_calibration": 500,
        "discriminator_epochs": 10,
        # independent calibration per grid point, so the band sees calibration noise
        "sweep_common_random_numbers": False,
    },
}

# fields whose default is None but which accept these types
_NULLABLE = {
    "model.projection": (str,),
    "inputs.data": (str,),
    "inputs.classifier": (str,),
    "inputs.calibration": (str,),
    "inputs.decomposed": (str,),
    "calibration.bandwidth": (int, float),
    "ensemble.max_failures": (int,),
}

_CHOICES = {
    "model.name": ("1d", "5d"),
    "classifier.loss": ("cross_entropy", "squared_error"),
    "training.mode": ("parameterized", "decomposed"),
    "calibration.method": ("histogram", "kde", "isotonic"),
    "ratio.estimator": ("approximate", "decomposed", "oracle"),
    "infer.method": ("grid", "bayesopt"),
}

# free-form sub-documents (validated where they are used)
_OPAQUE = {"training.prior0", "training.prior1"}


class ConfigError(ValueError):
    pass


def _check(user, default, path):
    out = copy.deepcopy(default)
    if not isinstance(user, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    for k, v in user.items():
        p = f"{path}.{k}" if path else k
        if k not in default:
            raise ConfigError(f"{p}: unknown field")
        d = default[k]
        if p in _OPAQUE:
            if not isinstance(v, dict):
                raise ConfigError(f"{p}: expected an object")
            out[k] = copy.deepcopy(v)
        elif isinstance(d, dict):
            out[k] = _check(v, d, p)
        elif d is None:
            if v is not None and not (isinstance(v, _NULLABLE[p]) and not isinstance(v, bool)):
                raise ConfigError(f"{p}: expected null or {_NULLABLE[p][0].__name__}")
            out[k] = v
        elif isinstance(d, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{p}: expected true or false")
            out[k] = v
        elif isinstance(d, float):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{p}: expected a number")
            out[k] = float(v)
        elif isinstance(d, int):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{p}: expected an integer")
            out[k] = v
        elif isinstance(d, list):
            if not isinstance(v, list):
                raise ConfigError(f"{p}: expected a list")
            out[k] = copy.deepcopy(v)
        else:
            if not isinstance(v, type(d)):
                raise ConfigError(f"{p}: expected {type(d).__name__}")
            out[k] = v
        if p in _CHOICES and out[k] not in _CHOICES[p]:
            raise ConfigError(f"{p}: must be one of {list(_CHOICES[p])}, got {out[k]!r}")
    return out


def resolve(user=None):
    """Merge ``user`` over the defaults, validating every field."""
    cfg = _check(user or {}, DEFAULTS, "")
    if cfg["seed"] < 0:
        raise ConfigError("seed: must be non-negative")
    if cfg["workers"] < 1:
        raise ConfigError("workers: must be at least 1")
    if cfg["n"] < 1:
        raise ConfigError("n: must be at least 1")
    return cfg


def load(path):
    """Read a config file, or the embedded config of a run manifest."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(doc, dict) and "manifest_version" in doc:
        return doc.get("command"), doc["config"]
    return None, doc
