"""Gaussian-process surrogate and expected-improvement Bayesian optimization."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from ._seeding import as_generator

_JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


class GPFitError(np.linalg.LinAlgError):
    """Kernel matrix stayed ill-conditioned after jitter escalation."""


def _sq_dist(A, B, ls):
    A = A / ls
    B = B / ls
    d = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2 * A @ B.T
    return np.maximum(d, 0.0)


class GPSurrogate:
    """Zero-mean GP on standardized targets with a squared-exponential ARD kernel.

    Inputs are rescaled to the unit box given by ``bounds``. Hyperparameters
    (length scales, signal and noise standard deviations) are fitted by
    maximizing the log marginal likelihood unless ``optimize=False``.
    """

    def __init__(self, bounds, length_scales=None, signal_std=1.0, noise_std=1e-3,
                 noise_bounds=(1e-6, 1.0), acquisition="expected_improvement"):
        self.bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
        d = len(self.bounds)
        self.length_scales = np.full(d, 0.3) if length_scales is None else \
            np.broadcast_to(np.asarray(length_scales, dtype=float), (d,)).copy()
        self.signal_std = float(signal_std)
        self.noise_std = float(noise_std)
        self.noise_bounds = noise_bounds
        self.acquisition = acquisition
        self.X = np.empty((0, d))
        self.y = np.empty(0)
        self.jitter = 0.0

    @property
    def dim(self):
        return len(self.bounds)

    def _unit(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return (X - lo) / (hi - lo)

    def _kernel(self, A, B, ls, sf):
        return sf * sf * np.exp(-0.5 * _sq_dist(A, B, ls))

    def _factor(self, K):
        scale = np.mean(np.diag(K))
        for j in _JITTERS:
            try:
                return cho_factor(K + j * scale * np.eye(len(K)), lower=True), j
            except LinAlgError:
                continue
        raise GPFitError("kernel matrix is not positive definite even with jitter")

    def _nlml(self, logp, U, z):
        d = self.dim
        ls, sf, sn = np.exp(logp[:d]), np.exp(logp[d]), np.exp(logp[d + 1])
        K = self._kernel(U, U, ls, sf) + sn * sn * np.eye(len(U))
        try:
            (c, low), _ = self._factor(K)
        except GPFitError:
            return 1e25
        alpha = cho_solve((c, low), z)
        return 0.5 * z @ alpha + np.sum(np.log(np.diag(c))) + 0.5 * len(z) * np.log(2 * np.pi)

    def fit(self, X, y, optimize=True, rng=None, restarts=4):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).ravel()
        if len(self.X) != len(self.y) or len(self.y) == 0:
            raise ValueError("need matching, non-empty X and y")
        self._ymean = float(self.y.mean())
        ystd = float(self.y.std())
        self._ystd = ystd if ystd > 0 else 1.0
        U = self._unit(self.X)
        z = (self.y - self._ymean) / self._ystd
        if optimize and len(z) > 1:
            rng = as_generator(0 if rng is None else rng)
            d = self.dim
            lb = np.r_[np.full(d, np.log(1e-2)), np.log(1e-2), np.log(self.noise_bounds[0])]
            ub = np.r_[np.full(d, np.log(10.0)), np.log(1e2), np.log(self.noise_bounds[1])]
            starts = [np.r_[np.log(self.length_scales), np.log(self.signal_std),
                            np.log(np.clip(self.noise_std, *self.noise_bounds))]]
            starts += [lb + (ub - lb) * rng.random(d + 2) for _ in range(restarts)]
            best = None
            for s0 in starts:
                res = minimize(self._nlml, np.clip(s0, lb, ub), args=(U, z), method="L-BFGS-B",
                               bounds=list(zip(lb, ub)))
                if best is None or res.fun < best.fun:
                    best = res
            p = np.exp(best.x)
            self.length_scales, self.signal_std, self.noise_std = p[:d], p[d], p[d + 1]
        self._U = U
        K = self._kernel(U, U, self.length_scales, self.signal_std) + self.noise_std ** 2 * np.eye(len(U))
        self._chol, self.jitter = self._factor(K)
        self._alpha = cho_solve(self._chol, z)
        return self

    def add(self, x, y, optimize=False):
        return self.fit(np.vstack([self.X, np.atleast_2d(x)]), np.r_[self.y, y], optimize=optimize)

    def predict(self, Xq, include_noise=False):
        """Posterior mean and standard deviation in the original target units."""
        Uq = self._unit(Xq)
        Ks = self._kernel(Uq, self._U, self.length_scales, self.signal_std)
        mu = Ks @ self._alpha
        v = cho_solve(self._chol, Ks.T)
        var = self.signal_std ** 2 - np.sum(Ks * v.T, axis=1)
        if include_noise:
            var = var + self.noise_std ** 2
        var = np.maximum(var, 0.0)
        return self._ymean + self._ystd * mu, self._ystd * np.sqrt(var)

    @property
    def noise_level(self):
        """Fitted noise standard deviation in target units."""
        return self._ystd * self.noise_std

    def to_dict(self):
        return {"bounds": self.bounds.tolist(), "length_scales": self.length_scales.tolist(),
                "signal_std": self.signal_std, "noise_std": self.noise_std,
                "jitter": self.jitter, "acquisition": self.acquisition,
                "X": self.X.tolist(), "y": self.y.tolist()}


def expected_improvement(gp, Xq, best):
    """Expected improvement below ``best`` (minimization)."""
    mu, sd = gp.predict(Xq)
    sd = np.maximum(sd, 1e-12)
    z = (best - mu) / sd
    return (best - mu) * ndtr(z) + sd * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)


def _multistart_min(fun, bounds, starts):
    best_x, best_f = None, np.inf
    for s in starts:
        res = minimize(fun, s, method="L-BFGS-B", bounds=[tuple(b) for b in bounds])
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    return best_x, best_f


@dataclass
class BayesOptResult:
    x: np.ndarray
    gp: GPSurrogate
    X: np.ndarray
    y: np.ndarray
    best_observed: np.ndarray = None
    meta: dict = field(default_factory=dict)


def bayes_minimize(fun, bounds, budget, seed=0, n_init=10, n_candidates=1000, n_starts=5):
    """Minimize a noisy black-box ``fun`` with a GP surrogate and expected improvement.

    A Latin-hypercube design of ``n_init`` points is followed by sequential
    EI maximization until ``budget`` evaluations have been spent. The
    returned incumbent minimizes the final GP posterior mean over the box.
    """
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    if budget < n_init:
        raise ValueError("budget must be at least the initial design size")
    rng = as_generator(seed)
    d = len(bounds)
    lo, hi = bounds[:, 0], bounds[:, 1]
    design = qmc.LatinHypercube(d=d, seed=rng).random(n_init)
    X = lo + (hi - lo) * design
    y = np.array([fun(x) for x in X], dtype=float)
    gp = GPSurrogate(bounds)
    while len(y) < budget:
        gp.fit(X, y, rng=rng)
        best = float(np.min(gp.predict(X)[0]))
        cand = lo + (hi - lo) * rng.random((n_candidates, d))
        ei = expected_improvement(gp, cand, best)
        starts = cand[np.argsort(-ei)[:n_starts]]
        x_next, _ = _multistart_min(lambda x: -expected_improvement(gp, x[None, :], best)[0],
                                    bounds, starts)
        X = np.vstack([X, x_next])
        y = np.r_[y, float(fun(x_next))]
    gp.fit(X, y, rng=rng)
    x_best, _ = _multistart_min(lambda x: gp.predict(x[None, :])[0][0], bounds,
                                X[np.argsort(gp.predict(X)[0])[:n_starts]])
    return BayesOptResult(x_best, gp, X, y, X[np.argmin(y)])
