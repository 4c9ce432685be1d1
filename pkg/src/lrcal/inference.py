"""Dataset-level likelihood ratios, likelihood curves and maximum-likelihood fits.

All likelihood values are expressed through a fixed reference point
``theta_ref``: ``log p(D|theta) - log p(D|theta_ref)``. Differences of these
quantities do not depend on the reference, which is what makes the
likelihood-free construction work (and what the diagnostics check).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import _seeding
from .gp import bayes_minimize
from .simulators import SampleSet

log = logging.getLogger(__name__)


class FailureCapExceeded(RuntimeError):
    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


def _data(D):
    return D.data if isinstance(D, SampleSet) else np.asarray(D, dtype=float)


def _grid(grid):
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if len(g) == 0:
        raise ValueError("grid must not be empty")
    return g


def dataset_log_ratio(D, theta, theta_ref, est):
    """``sum_x log r(x; theta, theta_ref)`` over the dataset."""
    X = _data(D)
    lr = np.asarray(est.log_ratio(X, theta, theta_ref), dtype=float)
    bad = np.flatnonzero(~np.isfinite(lr))
    if bad.size:
        raise FloatingPointError(
            f"non-finite log ratio for sample {bad[0]} (x={X[bad[0]].tolist()}) at theta={np.atleast_1d(theta).astype(float).tolist()}")
    return float(np.sum(lr))


def _sums(X, grid, theta_ref, est):
    raw = np.asarray(est.sum_log_ratio_grid(X, grid, theta_ref), dtype=float)
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        # recompute the first offending point per sample to name the culprit
        dataset_log_ratio(X, grid[bad[0]], theta_ref, est)
        raise FloatingPointError(f"non-finite dataset log ratio at theta={grid[bad[0]].tolist()}")
    return raw


@dataclass
class LikelihoodCurve:
    """``-2 log Lambda`` over a grid of parameter points (minimum exactly 0)."""

    thetas: np.ndarray
    values: np.ndarray
    log_ratios: np.ndarray
    theta_ref: tuple
    dataset: str = ""
    estimator: str = ""

    @property
    def argmin(self):
        return self.thetas[int(np.argmin(self.values))]

    def rows(self):
        return [(*t, v, r) for t, v, r in zip(self.thetas.tolist(), self.values.tolist(),
                                              self.log_ratios.tolist())]


def neg2_log_lambda_curve(D, grid, theta_ref, est, dataset="", estimator=None):
    """``-2 [log p(D|theta)/p(D|theta_ref) - max_grid log p(D|theta')/p(D|theta_ref)]``."""
    grid = _grid(grid)
    raw = _sums(_data(D), grid, theta_ref, est)
    values = -2.0 * (raw - raw.max())
    return LikelihoodCurve(grid, values, raw, tuple(np.atleast_1d(theta_ref).tolist()),
                           dataset, estimator or getattr(est, "name", type(est).__name__))


def mle_grid(D, grid, theta_ref, est):
    """Grid point maximizing the dataset log ratio (first index on ties)."""
    grid = _grid(grid)
    raw = _sums(_data(D), grid, theta_ref, est)
    return grid[int(np.argmax(raw))]


def refine_mle(D, start, bounds, theta_ref, est):
    """Continuous refinement of a grid MLE inside ``bounds``.

    One parameter: bounded Brent/golden-section search. Several: L-BFGS-B.
    """
    X = _data(D)
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    f = lambda t: -dataset_log_ratio(X, np.atleast_1d(t), theta_ref, est)  # noqa: E731
    if len(bounds) == 1:
        res = minimize_scalar(f, bounds=tuple(bounds[0]), method="bounded",
                              options={"xatol": 1e-10})
        cand = np.array([res.x])
    else:
        res = minimize(f, np.asarray(start, dtype=float), method="L-BFGS-B",
                       bounds=[tuple(b) for b in bounds], options={"ftol": 1e-14, "gtol": 1e-10})
        cand = np.asarray(res.x)
    start = np.atleast_1d(np.asarray(start, dtype=float))
    return cand if f(cand) <= f(start) else start


def mle_bayesopt(D, bounds, budget, theta_ref, est, seed=0, n_init=10):
    """Bayesian-optimization MLE of the noisy approximate likelihood.

    Minimizes ``-2 log p(D|theta)/p(D|theta_ref)``; returns ``(theta_hat, result)``
    where ``result.gp`` is the fitted surrogate.
    """
    X = _data(D)
    f = lambda t: -2.0 * dataset_log_ratio(X, t, theta_ref, est)  # noqa: E731
    res = bayes_minimize(f, bounds, budget, seed=_seeding.substream(seed, _seeding.STREAM_OPTIMIZER),
                         n_init=n_init)
    return res.x, res


def gp_curve(result, grid):
    """GP posterior mean of ``-2 log Lambda`` on ``grid``, shifted to minimum 0."""
    grid = _grid(grid)
    mu, sd = result.gp.predict(grid)
    return mu - mu.min(), sd


@dataclass
class EnsembleReport:
    estimator: str
    theta_true: tuple
    mles: np.ndarray
    neg2_at_true: np.ndarray
    seeds: list
    failures: list = field(default_factory=list)

    @property
    def replicates(self):
        return len(self.seeds)

    def rows(self):
        return [(i, s, *m, v) for i, (s, m, v) in
                enumerate(zip(self.seeds, self.mles.tolist(), self.neg2_at_true.tolist()))]


def ensemble_study(model, theta_true, n_per_dataset, replicates, estimator, grid, theta_ref,
                   seed=0, workers=1, max_failures=None):
    """MLE and ``-2 log Lambda(theta_true)`` over independent replicate datasets.

    ``estimator`` is a ratio estimator or a zero-argument factory; it is built
    once and shared read-only by all replicates. Replicate ``i`` draws its
    dataset from seed ``subseed(seed, STREAM_ENSEMBLE, i)`` so datasets do not
    depend on the estimator or on the worker count.
    """
    if replicates < 2:
        raise ValueError("need at least two replicates")
    est = estimator() if callable(estimator) and not hasattr(estimator, "log_ratio") else estimator
    grid = _grid(grid)
    theta_true = np.atleast_1d(np.asarray(theta_true, dtype=float))
    full = np.vstack([grid, theta_true])
    seeds = [_seeding.subseed(seed, _seeding.STREAM_ENSEMBLE, i) for i in range(replicates)]
    max_failures = replicates // 10 if max_failures is None else max_failures

    def one(i):
        X = model.sample(theta_true, n_per_dataset, seeds[i])
        raw = _sums(X, full, theta_ref, est)
        top = raw.max()
        return grid[int(np.argmax(raw[:-1]))], -2.0 * (raw[-1] - top)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(one, i) for i in range(replicates)]
            outcomes = [_collect(f.result) for f in futures]
    else:
        outcomes = [_collect(lambda i=i: one(i)) for i in range(replicates)]

    mles = np.full((replicates, grid.shape[1]), np.nan)
    neg2 = np.full(replicates, np.nan)
    failures = []
    for i, (ok, val) in enumerate(outcomes):
        if ok:
            mles[i], neg2[i] = val
        else:
            failures.append((i, val))
            log.warning("replicate %d failed: %s", i, val)
    report = EnsembleReport(getattr(est, "name", type(est).__name__), tuple(theta_true.tolist()),
                            mles, neg2, seeds, failures)
    if len(failures) > max_failures:
        raise FailureCapExceeded(f"{len(failures)} replicate failures exceed cap {max_failures}",
                                 partial=report)
    return report


def _collect(fn):
    try:
        return True, fn()
    except (FloatingPointError, ValueError, ArithmeticError) as exc:
        return False, repr(exc)
