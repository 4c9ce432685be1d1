"""Benchmark generative models with exact log-density oracles.

Two models are provided:

* :class:`UnivariateMixture` -- the three-component 1D Gaussian mixture
  ``p(x|gamma) = (1 - gamma) (p0 + p1) / 2 + gamma p2`` whose only free
  parameter is the weight of the third component.
* :class:`MultidimModel` -- a 5D model ``x = R z`` with independent latent
  coordinates, two of which carry the parameters ``(alpha, beta)``.

Both expose ``sample(theta, n, rng)`` and ``log_density(X, theta)``; the
latter is the test oracle and is never used by the likelihood-free code path.
Exponential distributions use the *rate* convention (mean ``1 / rate``).
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.special import logsumexp

from ._seeding import as_generator

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


# Primitive distributions ----------------------------------------------------

class Normal:
    def __init__(self, mu, sigma):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.mu = float(mu)
        self.sigma = float(sigma)

    def __repr__(self):
        return f"Normal(mu={self.mu!r}, sigma={self.sigma!r})"

    def rvs(self, n, rng=None):
        rng = as_generator(rng)
        return self.mu + self.sigma * rng.standard_normal(n)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return -0.5 * z * z - np.log(self.sigma) - _LOG_SQRT_2PI

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        from scipy.special import ndtr
        return ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    @property
    def mean(self):
        return self.mu


class Exponential:
    """Exponential distribution with the rate parameterization."""

    def __init__(self, rate):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)

    def __repr__(self):
        return f"Exponential(rate={self.rate!r})"

    def rvs(self, n, rng=None):
        rng = as_generator(rng)
        return rng.standard_exponential(n) / self.rate

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            out = np.log(self.rate) - self.rate * x
        return np.where(x >= 0, out, -np.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    @property
    def mean(self):
        return 1.0 / self.rate


class Mixture:
    """Finite mixture of univariate distributions with fixed weights."""

    def __init__(self, weights, components):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or len(w) != len(components):
            raise ValueError("need one weight per component")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-12):
            raise ValueError("weights must be non-negative and sum to 1")
        self.weights = w
        self.components = list(components)

    def __repr__(self):
        return f"Mixture(weights={self.weights.tolist()!r}, components={self.components!r})"

    def rvs(self, n, rng=None):
        rng = as_generator(rng)
        return _mixture_draw(rng, n, self.weights, self.components)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        terms = [c.logpdf(x) for c in self.components]
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logsumexp(np.stack(terms) + logw.reshape((-1,) + (1,) * x.ndim), axis=0)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return sum(w * c.cdf(x) for w, c in zip(self.weights, self.components))

    @property
    def mean(self):
        return float(sum(w * c.mean for w, c in zip(self.weights, self.components)))


def _mixture_draw(rng, n, weights, components):
    # One uniform picks the component, then each component draws its own
    # values; the order of RNG calls is fixed so draws are reproducible.
    u = rng.random(n)
    idx = np.searchsorted(np.cumsum(weights)[:-1], u, side="right")
    out = np.empty(n)
    for c, comp in enumerate(components):
        mask = idx == c
        out[mask] = comp.rvs(int(mask.sum()), rng)
    return out


# Sample containers ----------------------------------------------------------

@dataclass(frozen=True)
class SampleSet:
    """``n x p`` feature matrix together with its generating parameters and seed."""

    data: np.ndarray
    theta: tuple
    seed: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("SampleSet needs a non-empty 2D matrix")
        if not np.all(np.isfinite(data)):
            raise ValueError("SampleSet entries must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "theta", tuple(float(t) for t in np.atleast_1d(self.theta)))

    def __len__(self):
        return self.data.shape[0]

    @property
    def n_features(self):
        return self.data.shape[1]


# Models ---------------------------------------------------------------------

class GenerativeModel:
    """Base class: a parameterized sampler with an optional exact density.

    Subclasses set ``n_features``, ``n_params`` and ``param_names`` and
    implement ``sample`` and ``log_density``.
    """

    n_features = None
    n_params = None
    param_names = ()

    def check_theta(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        return theta

    def sample(self, theta, n, rng=None):
        raise NotImplementedError

    def log_density(self, X, theta):
        raise NotImplementedError

    def log_density_many(self, X, thetas):
        """Log density of every row of ``X`` under every parameter point.

        Returns an array of shape ``(len(thetas), len(X))``.
        """
        return np.stack([self.log_density(X, t) for t in np.atleast_2d(thetas)])

    def simulate(self, theta, n, seed):
        theta = self.check_theta(theta)
        return SampleSet(self.sample(theta, n, seed), tuple(theta), seed)


class UnivariateMixture(GenerativeModel):
    """1D mixture of three fixed Gaussians with weights ``((1-g)/2, (1-g)/2, g)``."""

    n_features = 1
    n_params = 1
    param_names = ("gamma",)

    def __init__(self, means=(-2.0, 0.0, 1.0), sigmas=(0.25, 2.0, 0.5)):
        self.components = [Normal(m, s) for m, s in zip(means, sigmas)]

    def __repr__(self):
        return f"UnivariateMixture(components={self.components!r})"

    def check_theta(self, theta):
        theta = super().check_theta(theta)
        if not 0.0 <= theta[0] <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {float(theta[0])!r}")
        return theta

    @staticmethod
    def weights(gamma):
        """Mixture weights; ``gamma`` may be an array, weights go on the last axis."""
        g = np.asarray(gamma, dtype=float)
        return np.stack([(1.0 - g) / 2.0, (1.0 - g) / 2.0, g], axis=-1)

    def component_weights(self, theta):
        return self.weights(self.check_theta(theta)[0])

    def sample(self, theta, n, rng=None):
        theta = self.check_theta(theta)
        if n < 1:
            raise ValueError("n must be at least 1")
        rng = as_generator(rng)
        x = _mixture_draw(rng, int(n), self.weights(theta[0]), self.components)
        return x[:, None]

    def sample_each(self, thetas, rng=None):
        """One draw per row of ``thetas``."""
        g = np.atleast_2d(np.asarray(thetas, dtype=float))[:, 0]
        if np.any((g < 0) | (g > 1)):
            raise ValueError("gamma must lie in [0, 1]")
        rng = as_generator(rng)
        w = self.weights(g)
        u = rng.random(len(g))
        idx = (u >= w[:, 0]).astype(int) + (u >= w[:, 0] + w[:, 1])
        mu = np.array([c.mu for c in self.components])
        sd = np.array([c.sigma for c in self.components])
        return (mu[idx] + sd[idx] * rng.standard_normal(len(g)))[:, None]

    def component_log_densities(self, X):
        x = np.asarray(X, dtype=float).reshape(-1)
        return np.stack([c.logpdf(x) for c in self.components])

    def log_density(self, X, theta):
        theta = self.check_theta(theta)
        lc = self.component_log_densities(X)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights(theta[0]))
        return logsumexp(lc + logw[:, None], axis=0)

    def log_density_many(self, X, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        g = thetas[:, 0]
        if np.any((g < 0) | (g > 1)):
            raise ValueError("gamma must lie in [0, 1]")
        lc = self.component_log_densities(X)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights(g))
        return logsumexp(lc[None, :, :] + logw[:, :, None], axis=1)

    def cdf(self, x, theta):
        theta = self.check_theta(theta)
        w = self.weights(theta[0])
        return sum(wi * c.cdf(x) for wi, c in zip(w, self.components))


def default_projection():
    """The checked-in 5x5 projection matrix."""
    text = resources.files("lrcal").joinpath("data/projection.json").read_text()
    return np.array(json.loads(text)["matrix"], dtype=float)


def load_projection(path):
    with open(path) as fh:
        doc = json.load(fh)
    return np.array(doc["matrix"] if isinstance(doc, dict) else doc, dtype=float)


class MultidimModel(GenerativeModel):
    """5D benchmark ``x = R z`` with latent

    ``z0 ~ N(alpha, 1)``, ``z1 ~ N(beta, 3)``, ``z2 ~ 0.5 N(-2, 1) + 0.5 N(2, 0.5)``,
    ``z3 ~ Exp(rate=3)``, ``z4 ~ Exp(rate=0.5)``.
    """

    n_features = 5
    n_params = 2
    param_names = ("alpha", "beta")

    def __init__(self, R=None):
        R = default_projection() if R is None else np.array(R, dtype=float)
        if R.shape != (5, 5):
            raise ValueError("R must be 5x5")
        sign, logdet = np.linalg.slogdet(R)
        if sign == 0 or not np.isfinite(logdet):
            raise ValueError("R must be invertible")
        self.R = R
        self.R.setflags(write=False)
        self._R_inv = np.linalg.inv(R)
        self._log_abs_det = float(logdet)
        self.z2 = Mixture([0.5, 0.5], [Normal(-2.0, 1.0), Normal(2.0, 0.5)])
        self.z3 = Exponential(3.0)
        self.z4 = Exponential(0.5)

    def __repr__(self):
        return "MultidimModel(R=...)"

    def latent(self, X):
        return np.asarray(X, dtype=float) @ self._R_inv.T

    def sample_latent(self, theta, n, rng=None):
        alpha, beta = self.check_theta(theta)
        if n < 1:
            raise ValueError("n must be at least 1")
        return self._draw_latent(alpha, beta, int(n), as_generator(rng))

    def sample_each(self, thetas, rng=None):
        """One draw per row of ``thetas``."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != 2:
            raise ValueError("expected (alpha, beta) rows")
        z = self._draw_latent(thetas[:, 0], thetas[:, 1], len(thetas), as_generator(rng))
        return z @ self.R.T

    def _draw_latent(self, alpha, beta, n, rng):
        eps = rng.standard_normal((n, 2))
        z = np.empty((n, 5))
        z[:, 0] = alpha + eps[:, 0]
        z[:, 1] = beta + 3.0 * eps[:, 1]
        z[:, 2] = self.z2.rvs(n, rng)
        z[:, 3] = self.z3.rvs(n, rng)
        z[:, 4] = self.z4.rvs(n, rng)
        return z

    def sample(self, theta, n, rng=None):
        return self.sample_latent(theta, n, rng) @ self.R.T

    def _fixed_log_density(self, z):
        return (self.z2.logpdf(z[:, 2]) + self.z3.logpdf(z[:, 3])
                + self.z4.logpdf(z[:, 4]) - self._log_abs_det)

    def log_density(self, X, theta):
        alpha, beta = self.check_theta(theta)
        z = self.latent(np.atleast_2d(X))
        return (Normal(alpha, 1.0).logpdf(z[:, 0]) + Normal(beta, 3.0).logpdf(z[:, 1])
                + self._fixed_log_density(z))

    def log_density_many(self, X, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        z = self.latent(np.atleast_2d(X))
        fixed = self._fixed_log_density(z)
        a = thetas[:, :1]
        b = thetas[:, 1:2]
        d0 = z[None, :, 0] - a
        d1 = (z[None, :, 1] - b) / 3.0
        return (-0.5 * d0 * d0 - 0.5 * d1 * d1 - np.log(3.0) - 2 * _LOG_SQRT_2PI
                + fixed[None, :])


# Function-style entry points ------------------------------------------------

_UNIVARIATE = UnivariateMixture()


def sample_univariate(gamma, n, seed):
    """Draw ``n`` samples of the 1D mixture at weight ``gamma``."""
    return _UNIVARIATE.simulate([gamma], n, seed)


def exact_log_density_univariate(x, gamma):
    return _UNIVARIATE.log_density(x, [gamma])


def sample_multidim(alpha, beta, n, seed, R=None):
    return MultidimModel(R).simulate([alpha, beta], n, seed)


def exact_log_density_multidim(x, alpha, beta, R=None):
    return MultidimModel(R).log_density(np.atleast_2d(x), [alpha, beta])


def make_model(name, R=None):
    if name in ("1d", "univariate", "mixture"):
        return UnivariateMixture()
    if name in ("5d", "multidim"):
        return MultidimModel(R)
    raise ValueError(f"unknown model {name!r}")
