"""Per-observation density-ratio estimators.

Every estimator exposes ``log_ratio(X, theta0, theta1)`` returning
``log p(x|theta0) / p(x|theta1)`` for each row of ``X``, and
``sum_log_ratio_grid(X, thetas, theta1)`` returning the dataset sums for many
numerator points at once.
"""

import threading
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from . import _seeding
from .calibration import (DEFAULT_BINS, DEFAULT_EPS, fit_density_pair, fit_isotonic,
                          ratio_from_isotonic)
from .classifier import ClassifierConfig, ParameterizedClassifier, train
from ._seeding import substream

CALIBRATION_METHODS = ("histogram", "kde", "isotonic")


class MissingCalibrationError(LookupError):
    pass


def _key(theta, decimals):
    return tuple(float(v) for v in np.round(np.atleast_1d(np.asarray(theta, dtype=float)), decimals))


class _GridMixin:
    def sum_log_ratio_grid(self, X, thetas, theta1):
        """Dataset sums ``sum_x log r(x; theta, theta1)`` for every ``theta`` in ``thetas``."""
        return np.array([np.sum(self.log_ratio(X, t, theta1)) for t in np.atleast_2d(thetas)])


class OracleRatio(_GridMixin):
    """Exact ratio from the model's closed-form density (testing baseline)."""

    name = "oracle"

    def __init__(self, model):
        self.model = model

    def log_ratio(self, X, theta0, theta1):
        X = np.asarray(X, dtype=float)
        return self.model.log_density(X, theta0) - self.model.log_density(X, theta1)

    def sum_log_ratio_grid(self, X, thetas, theta1):
        X = np.asarray(X, dtype=float)
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        ref = self.model.log_density(X, theta1)
        out = np.empty(len(thetas))
        for start in range(0, len(thetas), 256):
            block = self.model.log_density_many(X, thetas[start:start + 256])
            out[start:start + 256] = np.sum(block - ref[None, :], axis=1)
        return out


def _point_keys(theta0, theta1, decimals):
    # 32-bit words of the quantized parameters, so every pair gets its own stream
    q = np.r_[_key(theta0, decimals), _key(theta1, decimals)].astype("<f8")
    return tuple(int(w) for w in np.frombuffer((q + 0.0).tobytes(), dtype="<u4"))


class RatioEstimator(_GridMixin):
    """Classifier score followed by on-demand calibration at each ``(theta0, theta1)``.

    Calibration samples are drawn from ``model`` when a pair is first queried
    and cached under the parameter values rounded to ``decimals`` places. The
    numerator and denominator samples come from two fixed random streams of
    ``seed`` (common random numbers), so calibrations at neighbouring
    parameter points share their underlying randomness. With
    ``common_random_numbers=False`` each pair draws from its own streams,
    keyed by the rounded parameter values.
    """

    name = "calibrated"

    def __init__(self, classifier, model=None, calibration="histogram",
                 n_calibration=100_000, bins=DEFAULT_BINS, eps=DEFAULT_EPS, seed=0,
                 decimals=10, bandwidth=None, common_random_numbers=True):
        if calibration not in CALIBRATION_METHODS:
            raise ValueError(f"calibration must be one of {CALIBRATION_METHODS}")
        self.classifier = classifier
        self.model = model
        self.calibration = calibration
        self.n_calibration = int(n_calibration)
        self.bins = int(bins)
        self.eps = float(eps)
        self.seed = seed
        self.decimals = decimals
        self.bandwidth = bandwidth
        self.common_random_numbers = bool(common_random_numbers)
        self._cache = {}
        self._lock = threading.Lock()

    @property
    def cache(self):
        return dict(self._cache)

    def _score(self, X, theta0, theta1):
        if self.classifier.layout[1] or self.classifier.layout[2]:
            return self.classifier.score(X, theta0, theta1)
        return self.classifier.score(X)

    def set_calibration(self, theta0, theta1, calib):
        key = (_key(theta0, self.decimals), _key(theta1, self.decimals))
        with self._lock:
            self._cache.setdefault(key, calib)
        return self._cache[key]

    def fit_calibration(self, theta0, theta1):
        """Fit (without caching) the calibration object for ``(theta0, theta1)``."""
        if self.model is None:
            raise MissingCalibrationError(
                f"no calibration for theta0={list(np.atleast_1d(theta0))}, "
                f"theta1={list(np.atleast_1d(theta1))} and no model attached")
        t0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        t1 = np.atleast_1d(np.asarray(theta1, dtype=float))
        keys = () if self.common_random_numbers else _point_keys(t0, t1, self.decimals)
        x0 = self.model.sample(t0, self.n_calibration,
                               substream(self.seed, _seeding.STREAM_CALIBRATION, 0, *keys))
        x1 = self.model.sample(t1, self.n_calibration,
                               substream(self.seed, _seeding.STREAM_CALIBRATION, 1, *keys))
        s0 = self._score(x0, t0, t1)
        s1 = self._score(x1, t0, t1)
        if self.calibration == "isotonic":
            return fit_isotonic(np.r_[s0, s1], np.r_[np.zeros(len(s0)), np.ones(len(s1))])
        return fit_density_pair(s0, s1, method=self.calibration, bins=self.bins, eps=self.eps,
                                theta0=tuple(t0), theta1=tuple(t1), bandwidth=self.bandwidth)

    def calibration_for(self, theta0, theta1):
        key = (_key(theta0, self.decimals), _key(theta1, self.decimals))
        calib = self._cache.get(key)
        if calib is None:
            # Fitting happens under the lock: one writer per key, many readers.
            with self._lock:
                calib = self._cache.get(key)
                if calib is None:
                    calib = self.fit_calibration(key[0], key[1])
                    self._cache[key] = calib
        return calib

    def log_ratio(self, X, theta0, theta1):
        calib = self.calibration_for(theta0, theta1)
        s = self._score(X, theta0, theta1)
        if self.calibration == "isotonic":
            return np.log(ratio_from_isotonic(calib, s, self.eps))
        return calib.log_ratio(s)

    def uncalibrated_log_ratio(self, X, theta0, theta1):
        """``log((1 - s) / s)`` from the raw classifier output."""
        if self.classifier.layout[1] or self.classifier.layout[2]:
            return -self.classifier.logit(X, theta0, theta1)
        return -self.classifier.logit(X)


class UncalibratedRatio(_GridMixin):
    """``(1 - s) / s`` straight from a classifier."""

    name = "uncalibrated"

    def __init__(self, classifier):
        self.classifier = classifier

    def log_ratio(self, X, theta0, theta1):
        if self.classifier.layout[1] or self.classifier.layout[2]:
            return -self.classifier.logit(X, theta0, theta1)
        return -self.classifier.logit(X)


# Mixture decomposition ------------------------------------------------------

class PairwiseRatio:
    """Calibrated ratio ``p_c(x) / p_c'(x)`` for one component pair.

    The classifier is trained with component ``c`` as label 0 and ``c'`` as
    label 1; ``pair.numerator`` is the score density under ``c``.
    """

    def __init__(self, classifier, pair, components=(0, 1), calibration="histogram", auc=None):
        self.classifier = classifier
        self.pair = pair
        self.components = tuple(components)
        self.calibration = calibration
        self.auc = auc

    def log_ratio(self, X):
        s = self.classifier.score(X)
        if self.calibration == "isotonic":
            return np.log(ratio_from_isotonic(self.pair, s))
        return self.pair.log_ratio(s)

    def to_dict(self):
        return {"components": list(self.components), "calibration": self.calibration,
                "auc": self.auc, "classifier": self.classifier.to_dict(),
                "pair": self.pair.to_dict()}

    @classmethod
    def from_dict(cls, d):
        from .calibration import density_from_dict, pair_from_dict

        pair = density_from_dict(d["pair"]) if d["calibration"] == "isotonic" \
            else pair_from_dict(d["pair"])
        return cls(ParameterizedClassifier.from_dict(d["classifier"]), pair,
                   tuple(d["components"]), d["calibration"], d.get("auc"))


class OraclePairwiseRatio:
    def __init__(self, comp_a, comp_b, components=(0, 1)):
        self.a = comp_a
        self.b = comp_b
        self.components = tuple(components)

    def log_ratio(self, X):
        x = np.asarray(X, dtype=float).reshape(-1)
        return self.a.logpdf(x) - self.b.logpdf(x)


def _logw(w):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(w, dtype=float))


class DecomposedRatioEstimator(_GridMixin):
    """Mixture-vs-mixture ratio assembled from pairwise component ratios.

    For ``p(x|theta) = sum_c w_c(theta) p_c(x)``::

        p(x|theta0) / p(x|theta1)
            = sum_c [ sum_c' w_c'(theta1) / w_c(theta0) * p_c'(x) / p_c(x) ]^-1

    Diagonal terms use ratio 1. Outer terms with ``w_c(theta0) = 0`` are
    dropped (their inner sum is infinite), as are inner terms with
    ``w_c'(theta1) = 0``. Components are assumed independent of ``theta``.
    """

    name = "decomposed"

    def __init__(self, weight_fn, pairs, n_components):
        self.weight_fn = weight_fn
        self.n_components = int(n_components)
        self.pairs = dict(pairs)
        expected = set(combinations(range(self.n_components), 2))
        if set(self.pairs) != expected:
            raise ValueError(f"need one pairwise ratio for each of {sorted(expected)}")

    @classmethod
    def from_oracle(cls, model):
        comps = model.components
        pairs = {(a, b): OraclePairwiseRatio(comps[a], comps[b], (a, b))
                 for a, b in combinations(range(len(comps)), 2)}
        return cls(model.component_weights, pairs, len(comps))

    def to_dict(self):
        return {"format": "lrcal.decomposed", "version": 1, "n_components": self.n_components,
                "pairs": [p.to_dict() for _, p in sorted(self.pairs.items())]}

    @classmethod
    def from_dict(cls, d, weight_fn):
        if d.get("format") != "lrcal.decomposed":
            raise ValueError("not a decomposed-estimator document")
        pairs = {}
        for pd in d["pairs"]:
            p = PairwiseRatio.from_dict(pd)
            pairs[p.components] = p
        return cls(weight_fn, pairs, d["n_components"])

    def component_log_ratios(self, X):
        """Array ``L`` with ``L[c, c', i] = log p_c'(x_i) / p_c(x_i)``."""
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        L = np.zeros((self.n_components, self.n_components, n))
        for (a, b), est in self.pairs.items():
            lr = est.log_ratio(X)  # log p_a / p_b
            L[a, b] = -lr
            L[b, a] = lr
        return L

    def _inner(self, L, w1):
        # A[c, i] = log sum_c' w_c'(theta1) p_c'(x_i) / p_c(x_i)
        lw1 = _logw(w1)
        keep = np.isfinite(lw1)
        return logsumexp(L[:, keep, :] + lw1[keep][None, :, None], axis=1)

    def combine(self, L, w0, w1):
        A = self._inner(L, w1)
        lw0 = _logw(w0)
        keep = np.isfinite(lw0)
        return logsumexp(lw0[keep][:, None] - A[keep], axis=0)

    def log_ratio(self, X, theta0, theta1):
        L = self.component_log_ratios(X)
        return self.combine(L, self.weight_fn(theta0), self.weight_fn(theta1))

    def sum_log_ratio_grid(self, X, thetas, theta1):
        L = self.component_log_ratios(X)
        A = self._inner(L, self.weight_fn(theta1))
        W0 = np.stack([self.weight_fn(t) for t in np.atleast_2d(thetas)])
        lw0 = _logw(W0)
        # exp(-inf) terms vanish inside logsumexp, which handles w_c(theta0) = 0
        return np.sum(logsumexp(lw0[:, :, None] - A[None, :, :], axis=1), axis=1)


def fit_pairwise(components, weight_fn, n_train, config=None, calibration="histogram",
                 n_calibration=100_000, bins=DEFAULT_BINS, eps=DEFAULT_EPS, seed=0):
    """Train and calibrate one classifier per unordered component pair.

    ``n_train`` is the number of training rows per pair (half from each
    component). Returns a :class:`DecomposedRatioEstimator`; each pair keeps
    its held-out AUC and its calibration object.
    """
    import dataclasses
    import warnings

    from .classifier import ConvergenceWarning
    from .diagnostics import roc_and_auc

    if len(components) < 2:
        raise ValueError("need at least two components")
    config = config or ClassifierConfig()
    half = int(n_train) // 2
    pairs = {}
    for k, (a, b) in enumerate(combinations(range(len(components)), 2)):
        try:
            rng = substream(seed, _seeding.STREAM_TRAIN, k)
            xa = components[a].rvs(half, rng)
            xb = components[b].rvs(half, rng)
            X = np.empty(2 * half)
            X[0::2], X[1::2] = xa, xb
            y = np.tile([0.0, 1.0], half)
            cfg = dataclasses.replace(config, seed=_seeding.subseed(config.seed, k))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                clf = train(X[:, None], cfg, y=y)
            crng = substream(seed, _seeding.STREAM_CALIBRATION, k)
            ca = components[a].rvs(n_calibration, crng)
            cb = components[b].rvs(n_calibration, crng)
            sa, sb = clf.score(ca[:, None]), clf.score(cb[:, None])
            if calibration == "isotonic":
                pair = fit_isotonic(np.r_[sa, sb], np.r_[np.zeros(len(sa)), np.ones(len(sb))])
            else:
                pair = fit_density_pair(sa, sb, method=calibration, bins=bins, eps=eps)
            hrng = substream(seed, _seeding.STREAM_HOLDOUT, k)
            ha, hb = components[a].rvs(20_000, hrng), components[b].rvs(20_000, hrng)
            auc = roc_and_auc(np.r_[clf.score(ha[:, None]), clf.score(hb[:, None])],
                              np.r_[np.zeros(len(ha)), np.ones(len(hb))]).auc
        except Exception as exc:
            raise RuntimeError(f"component pair ({a}, {b}) failed: {exc}") from exc
        pairs[(a, b)] = PairwiseRatio(clf, pair, (a, b), calibration, auc)
    return DecomposedRatioEstimator(weight_fn, pairs, len(components))
