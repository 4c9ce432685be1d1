"""Approximation diagnostics and ROC primitives."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RocReport:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    mode: str = "unweighted"
    meta: dict = field(default_factory=dict)

    def to_rows(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_and_auc(scores, labels, weights=None, mode="unweighted"):
    """Weighted ROC curve from a descending threshold sweep, AUC by trapezoids.

    Tied scores form a single threshold step, so ties contribute half credit.
    Label 1 is the positive class.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    w = np.ones_like(s) if weights is None else np.asarray(weights, dtype=float).ravel()
    if not (s.shape == y.shape == w.shape):
        raise ValueError("scores, labels and weights must have equal length")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    pos = w * (y == 1)
    neg = w * (y == 0)
    P, N = pos.sum(), neg.sum()
    if P <= 0 or N <= 0:
        raise ValueError("both classes need positive total weight")
    order = np.argsort(-s, kind="stable")
    s, pos, neg = s[order], pos[order], neg[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.r_[0.0, np.cumsum(pos)[last]] / P
    fp = np.r_[0.0, np.cumsum(neg)[last]] / N
    # guard against round-off at the end point
    tp[-1] = fp[-1] = 1.0
    tp = np.maximum.accumulate(np.minimum(tp, 1.0))
    fp = np.maximum.accumulate(np.minimum(fp, 1.0))
    auc = float(np.sum(np.diff(fp) * (tp[1:] + tp[:-1]) / 2.0))
    return RocReport(fp, tp, min(max(auc, 0.0), 1.0), mode)


# Reference-point independence -----------------------------------------------

BAND_EXIT_FRACTION = 0.2


@dataclass
class SweepResult:
    """Likelihood curves of one dataset computed through several reference points.

    ``band_mean`` / ``band_std`` come from a GP fitted to the curve of
    ``references[band_index]`` (predictive std, calibration noise included).
    """

    references: list
    curves: list
    gp_means: list
    gp_stds: list
    band_index: int = 0

    @property
    def grid(self):
        return self.curves[0].thetas

    @property
    def band_mean(self):
        return self.gp_means[self.band_index]

    @property
    def band_std(self):
        return self.gp_stds[self.band_index]

    def fraction_inside(self, k, width=2.0):
        dev = np.abs(self.curves[k].values - self.band_mean)
        return float(np.mean(dev <= width * self.band_std))

    def exits_band(self, k, width=2.0, max_outside=BAND_EXIT_FRACTION):
        return 1.0 - self.fraction_inside(k, width) > max_outside

    def max_discrepancy(self):
        vals = np.stack([c.values for c in self.curves])
        return float(np.max(vals.max(axis=0) - vals.min(axis=0)))

    def spread(self):
        """Mean over the grid of the range of curve values across references."""
        vals = np.stack([c.values for c in self.curves])
        return float(np.mean(vals.max(axis=0) - vals.min(axis=0)))


def reference_sweep(D, grid, references, est, band_index=0, seed=0, fit_gp=True):
    """One ``-2 log Lambda`` curve per reference point, with a GP noise band.

    The band is only as wide as the noise the GP can see. An estimator with
    common random numbers gives curves whose calibration error is smooth in
    ``theta``, which the GP reads as signal, so pass one built with
    ``common_random_numbers=False`` for a meaningful band.
    """
    from .gp import GPSurrogate
    from .inference import neg2_log_lambda_curve

    if len(references) < 2:
        raise ValueError("need at least two reference points")
    curves = [neg2_log_lambda_curve(D, grid, ref, est) for ref in references]
    means, stds = [], []
    g = curves[0].thetas
    bounds = np.c_[g.min(axis=0), g.max(axis=0)]
    bounds[:, 1] = np.where(bounds[:, 1] > bounds[:, 0], bounds[:, 1], bounds[:, 0] + 1.0)
    for c in curves:
        if fit_gp:
            gp = GPSurrogate(bounds, noise_bounds=(1e-4, 1.0)).fit(c.thetas, c.values, rng=seed)
            mu, sd = gp.predict(c.thetas, include_noise=True)
        else:
            mu, sd = c.values.copy(), np.zeros_like(c.values)
        means.append(mu)
        stds.append(sd)
    return SweepResult([tuple(np.atleast_1d(r).tolist()) for r in references], curves, means, stds,
                       band_index)


# Reweighted discrimination ----------------------------------------------------

WEIGHT_SOURCES = ("none", "estimator", "oracle")


def weighted_roc_test(model, theta0, theta1, weights="none", n=10_000, config=None, seed=0,
                      estimator=None, test_fraction=0.5):
    """Train a fresh discriminator between ``x ~ theta0`` and reweighted ``x ~ theta1``.

    The ``theta1`` sample is weighted by ``r(x; theta0, theta1)`` taken from
    ``estimator`` (``weights="estimator"``), from the exact density
    (``"oracle"``) or by one (``"none"``). Class-1 weights are normalized to
    mean one. Returns the weighted ROC on a held-out split; an AUC near 0.5
    means the reweighted sample is indistinguishable from ``theta0``.
    """
    import warnings

    from . import _seeding
    from .classifier import ClassifierConfig, ConvergenceWarning, train
    from .ratio import OracleRatio

    if weights not in WEIGHT_SOURCES:
        raise ValueError(f"weights must be one of {WEIGHT_SOURCES}")
    if n < 100:
        raise ValueError("need at least 100 samples per class")
    config = config or ClassifierConfig(epochs=10, validation_fraction=0.0)
    rng = _seeding.substream(seed, _seeding.STREAM_DIAGNOSTIC)
    x0 = model.sample(theta0, n, rng)
    x1 = model.sample(theta1, n, rng)
    if weights == "none":
        w1 = np.ones(n)
    else:
        src = OracleRatio(model) if weights == "oracle" else estimator
        if src is None:
            raise ValueError("an estimator is required for estimator weights")
        w1 = np.exp(src.log_ratio(x1, theta0, theta1))
    meta = {"weights": weights, "n": n}
    total = float(np.sum(w1))
    if not np.isfinite(total) or total <= 1e-12 * n:
        raise ValueError("degenerate weights: total weight is (numerically) zero")
    w1 = w1 * (n / total)
    ess = float(total ** 2 / np.sum((w1 * total / n) ** 2))
    meta["effective_sample_size"] = ess
    meta["degenerate"] = ess < 0.01 * n
    if meta["degenerate"]:
        warnings.warn(f"weighted sample has effective size {ess:.1f} of {n}")

    X = np.vstack([x0, x1])
    y = np.r_[np.zeros(n), np.ones(n)]
    w = np.r_[np.ones(n), w1]
    perm = rng.permutation(2 * n)
    n_test = int(round(test_fraction * 2 * n))
    test, fit = perm[:n_test], perm[n_test:]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        clf = train(X[fit], config, y=y[fit], sample_weight=w[fit])
    report = roc_and_auc(clf.predict_proba(X[test]), y[test], w[test],
                         mode={"none": "unweighted", "estimator": "approximate-ratio",
                               "oracle": "exact-ratio"}[weights])
    report.meta.update(meta)
    return report
