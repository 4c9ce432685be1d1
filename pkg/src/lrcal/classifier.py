"""Parameterized probabilistic classifiers trained from scratch with numpy.

The model is a fully connected network with ``tanh`` hidden units and a
sigmoid output, trained by mini-batch Adam on a (weighted) cross-entropy or
squared-error loss. A network with no hidden layers is plain logistic
regression and serves as the deliberately weak baseline.

Training data follow the parameterized scheme: each row holds the features
``x`` concatenated with the parameter points ``theta0`` and ``theta1``; rows
with label 0 have ``x ~ p(x|theta0)`` and rows with label 1 have
``x ~ p(x|theta1)``.
"""

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from . import _seeding
from ._seeding import as_generator, substream

FORMAT_VERSION = 1
_EPS = np.finfo(float).eps


class TrainingDivergedError(ArithmeticError):
    """Raised when the training loss becomes non-finite."""


class ConvergenceWarning(UserWarning):
    """Emitted when the loss is still moving at the end of the epoch budget."""


# Parameter priors -----------------------------------------------------------

class PointPrior:
    """Degenerate prior concentrated on a single parameter point."""

    def __init__(self, theta):
        self.theta = np.atleast_1d(np.asarray(theta, dtype=float))

    def sample(self, n, rng):
        return np.tile(self.theta, (n, 1))

    def to_dict(self):
        return {"kind": "point", "theta": self.theta.tolist()}


class UniformPrior:
    """Uniform distribution over the box ``[low, high]``."""

    def __init__(self, low, high):
        self.low = np.atleast_1d(np.asarray(low, dtype=float))
        self.high = np.atleast_1d(np.asarray(high, dtype=float))
        if self.low.shape != self.high.shape or np.any(self.high < self.low):
            raise ValueError("invalid box bounds")

    def sample(self, n, rng):
        return self.low + (self.high - self.low) * rng.random((n, len(self.low)))

    def to_dict(self):
        return {"kind": "uniform", "low": self.low.tolist(), "high": self.high.tolist()}


class GridPrior:
    """Uniform choice among a finite set of parameter points (e.g. a grid scan)."""

    def __init__(self, points):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))

    @classmethod
    def regular(cls, low, high, num):
        axes = [np.linspace(lo, hi, k) for lo, hi, k in
                zip(np.atleast_1d(low), np.atleast_1d(high), np.broadcast_to(num, np.shape(np.atleast_1d(low))))]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))

    def sample(self, n, rng):
        return self.points[rng.integers(len(self.points), size=n)]

    def to_dict(self):
        return {"kind": "grid", "points": self.points.tolist()}


def prior_from_dict(d):
    kind = d["kind"]
    if kind == "point":
        return PointPrior(d["theta"])
    if kind == "uniform":
        return UniformPrior(d["low"], d["high"])
    if kind == "grid":
        if "points" in d:
            return GridPrior(d["points"])
        return GridPrior.regular(d["low"], d["high"], d["num"])
    raise ValueError(f"unknown prior kind {kind!r}")


# Training sets --------------------------------------------------------------

@dataclass
class TrainingSet:
    """Labeled rows ``((x, theta0, theta1), y)`` stored column-wise."""

    x: np.ndarray
    theta0: np.ndarray
    theta1: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)

    @property
    def features(self):
        return np.hstack([self.x, self.theta0, self.theta1])

    @property
    def layout(self):
        return (self.x.shape[1], self.theta0.shape[1], self.theta1.shape[1])


def build_training_set(model, prior0, prior1, N, seed):
    """Generate ``N`` labeled rows by alternating draws from ``prior0`` and ``prior1``.

    Each iteration draws ``theta0`` and ``theta1``, then one ``x`` from each
    hypothesis; the pair of rows (label 0 then label 1) both carry
    ``(theta0, theta1)``.
    """
    if N < 2 or N % 2:
        raise ValueError(f"N must be even and >= 2, got {N}")
    rng = substream(seed, _seeding.STREAM_TRAIN)
    half = N // 2
    t0 = prior0.sample(half, rng)
    t1 = prior1.sample(half, rng)
    x0 = sample_each(model, t0, rng)
    x1 = sample_each(model, t1, rng)
    p = x0.shape[1]
    x = np.empty((N, p))
    x[0::2] = x0
    x[1::2] = x1
    theta0 = np.repeat(t0, 2, axis=0)
    theta1 = np.repeat(t1, 2, axis=0)
    y = np.tile([0.0, 1.0], half)
    return TrainingSet(x, theta0, theta1, y)


def sample_each(model, thetas, rng):
    """One draw of ``x`` per row of ``thetas``."""
    thetas = np.atleast_2d(thetas)
    uniq, inverse = np.unique(thetas, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    if len(uniq) * 20 < len(thetas) or not hasattr(model, "sample_each"):
        out = np.empty((len(thetas), model.n_features))
        for k, t in enumerate(uniq):
            idx = np.flatnonzero(inverse == k)
            out[idx] = model.sample(t, len(idx), rng)
        return out
    return model.sample_each(thetas, rng)


# Network --------------------------------------------------------------------

@dataclass
class ClassifierConfig:
    hidden: tuple = (16, 16)
    loss: str = "cross_entropy"
    learning_rate: float = 0.01
    lr_decay: float = 0.9
    epochs: int = 20
    batch_size: int = 256
    seed: int = 0
    l2: float = 0.0
    validation_fraction: float = 0.05
    tol: float = 1e-3

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be >= 1")
        if self.loss not in ("cross_entropy", "squared_error"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in [0, 1)")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def logistic_config(**kw):
    """Configuration of the logistic-regression baseline (no hidden layers)."""
    kw.setdefault("hidden", ())
    return ClassifierConfig(**kw)


class _Net:
    # Parameters live in one flat vector; ``layers`` holds (W, b) views into it.

    def __init__(self, sizes, flat=None):
        self.sizes = list(sizes)
        shapes = []
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            shapes += [(a, b), (b,)]
        self.shapes = shapes
        n = sum(int(np.prod(s)) for s in shapes)
        self.flat = np.zeros(n) if flat is None else np.array(flat, dtype=float)
        if self.flat.shape != (n,):
            raise ValueError("parameter vector has the wrong length")
        self.layers = self._views(self.flat)

    def _views(self, vec):
        out, k = [], 0
        for s in self.shapes:
            m = int(np.prod(s))
            out.append(vec[k:k + m].reshape(s))
            k += m
        return [(out[i], out[i + 1]) for i in range(0, len(out), 2)]

    def init(self, rng):
        for W, b in self.layers:
            lim = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[...] = rng.uniform(-lim, lim, size=W.shape)
            b[...] = 0.0

    def forward(self, X):
        acts = [X]
        h = X
        for W, b in self.layers[:-1]:
            h = np.tanh(h @ W + b)
            acts.append(h)
        W, b = self.layers[-1]
        return (h @ W + b)[:, 0], acts

    def backward(self, dlogit, acts, grad):
        gl = self._views(grad)
        delta = dlogit[:, None]
        for i in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[i]
            gW, gb = gl[i]
            gW[...] = acts[i].T @ delta
            gb[...] = delta.sum(axis=0)
            if i:
                delta = (delta @ W.T) * (1.0 - acts[i] ** 2)
        return grad


def _loss_and_dlogit(logit, y, w, loss):
    wsum = w.sum()
    if loss == "cross_entropy":
        # softplus(z) - y z, stable for large |z|
        per = np.logaddexp(0.0, logit) - y * logit
        s = expit(logit)
        d = (s - y) * w / wsum
    else:
        s = expit(logit)
        per = (s - y) ** 2
        d = 2.0 * (s - y) * s * (1.0 - s) * w / wsum
    return float(per @ w / wsum), d


def loss_and_gradient(net, X, y, w, config):
    """Mean loss and its gradient w.r.t. the flat parameter vector."""
    logit, acts = net.forward(X)
    loss, d = _loss_and_dlogit(logit, y, w, config.loss)
    grad = net.backward(d, acts, np.zeros_like(net.flat))
    if config.l2:
        for (W, _), (gW, _) in zip(net.layers, net._views(grad)):
            gW += config.l2 * W
            loss += 0.5 * config.l2 * float(np.sum(W * W))
    return loss, grad


# Trained model --------------------------------------------------------------

class ParameterizedClassifier:
    """Trained score function ``s(x; theta0, theta1)`` in ``(0, 1)``.

    ``layout`` is ``(n_x, n_theta0, n_theta1)``; plain (non-parameterized)
    classifiers use ``(n_x, 0, 0)``.
    """

    def __init__(self, config, layout, weights, mean, scale, history=None, converged=True):
        self.config = config
        self.layout = tuple(int(v) for v in layout)
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        n_in = sum(self.layout)
        self._net = _Net([n_in, *config.hidden, 1], weights)
        self.history = list(history or [])
        self.converged = converged

    @property
    def weights(self):
        return self._net.flat.copy()

    @property
    def n_inputs(self):
        return sum(self.layout)

    def features(self, x, theta0=None, theta1=None):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.layout[0] == 1 else x[None, :]
        n = len(x)
        cols = [x]
        for theta, k in ((theta0, self.layout[1]), (theta1, self.layout[2])):
            if k == 0:
                continue
            if theta is None:
                raise ValueError("classifier is parameterized; theta0 and theta1 are required")
            t = np.atleast_1d(np.asarray(theta, dtype=float))
            cols.append(np.broadcast_to(t, (n, k)) if t.ndim == 1 else t)
        F = np.hstack(cols) if len(cols) > 1 else x
        if F.shape[1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} input columns, got {F.shape[1]}")
        return F

    def decision_function(self, F):
        """Pre-sigmoid output for a raw (unstandardized) feature matrix."""
        F = np.asarray(F, dtype=float)
        if F.ndim != 2 or F.shape[1] != self.n_inputs:
            raise ValueError(f"expected shape (n, {self.n_inputs}), got {F.shape}")
        return self._net.forward((F - self.mean) / self.scale)[0]

    def predict_proba(self, F):
        return np.clip(expit(self.decision_function(F)), _EPS, 1.0 - _EPS)

    def score(self, x, theta0=None, theta1=None):
        return self.predict_proba(self.features(x, theta0, theta1))

    def logit(self, x, theta0=None, theta1=None):
        return self.decision_function(self.features(x, theta0, theta1))

    def to_dict(self):
        return {
            "format": "lrcal.classifier",
            "version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "layout": list(self.layout),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "weights": self._net.flat.tolist(),
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "lrcal.classifier" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported classifier document")
        return cls(ClassifierConfig(**d["config"]), d["layout"], d["weights"],
                   d["mean"], d["scale"], converged=d.get("converged", True))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def train(data, config, y=None, sample_weight=None, layout=None):
    """Fit a classifier by mini-batch Adam.

    ``data`` is either a :class:`TrainingSet` or a raw feature matrix (then
    ``y`` is required). Per-example ``sample_weight`` multiplies the loss.
    Returns a :class:`ParameterizedClassifier` whose ``history`` lists
    ``(epoch, loss, heldout_auc)`` tuples.
    """
    from .diagnostics import roc_and_auc

    if isinstance(data, TrainingSet):
        F, y, layout = data.features, data.y, data.layout
    else:
        F = np.asarray(data, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        if y is None:
            raise ValueError("labels are required")
        layout = layout or (F.shape[1], 0, 0)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if len(F) != len(y) or len(w) != len(y):
        raise ValueError("features, labels and weights must have equal length")
    if not np.all(np.isfinite(F)):
        raise ValueError("features must be finite")
    if not set(np.unique(y)) == {0.0, 1.0}:
        raise ValueError("both labels 0 and 1 must be present")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")

    rng = substream(config.seed, _seeding.STREAM_INIT)
    order = rng.permutation(len(y))
    n_val = int(round(config.validation_fraction * len(y)))
    val, fit = order[:n_val], order[n_val:]

    mean = F[fit].mean(axis=0)
    scale = F[fit].std(axis=0)
    scale[scale == 0] = 1.0
    Z = (F - mean) / scale

    net = _Net([F.shape[1], *config.hidden, 1])
    net.init(rng)

    m = np.zeros_like(net.flat)
    v = np.zeros_like(net.flat)
    b1, b2, step = 0.9, 0.999, 0
    history = []
    Zf, yf, wf = Z[fit], y[fit], w[fit]
    prev = None
    converged = False
    for epoch in range(config.epochs):
        lr = config.learning_rate * config.lr_decay ** epoch
        perm = rng.permutation(len(yf))
        total, wtot = 0.0, 0.0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            wb = wf[idx]
            ws = wb.sum()
            if ws <= 0:
                continue
            loss, g = loss_and_gradient(net, Zf[idx], yf[idx], wb, config)
            if not np.isfinite(loss) or not np.all(np.isfinite(g)):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            total += loss * ws
            wtot += ws
            step += 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** step)
            vhat = v / (1 - b2 ** step)
            net.flat -= lr * mhat / (np.sqrt(vhat) + 1e-8)
        epoch_loss = total / wtot
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
        auc = float("nan")
        if n_val:
            yv = y[val]
            if 0 < yv.sum() < len(yv):
                sv = net.forward(Z[val])[0]
                auc = roc_and_auc(sv, yv, w[val]).auc
        history.append((epoch, epoch_loss, auc))
        if prev is not None and abs(prev - epoch_loss) <= config.tol * max(abs(prev), 1e-12):
            converged = True
        prev = epoch_loss
    if not converged:
        warnings.warn("loss still changing at the end of the epoch budget", ConvergenceWarning)
    return ParameterizedClassifier(config, layout, net.flat, mean, scale, history, converged)


def gradient_check(config, features, y, sample_weight=None, step=1e-6, seed=0, floor=1e-4):
    """Largest relative discrepancy between analytic and central-difference gradients.

    The network is randomly initialized (biases included) from ``seed``.
    Relative error is ``|a - n| / max(|a| + |n|, floor)``, so gradient
    components much smaller than ``floor`` are effectively compared in
    absolute terms.
    """
    F = np.asarray(features, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    net = _Net([F.shape[1], *config.hidden, 1])
    rng = as_generator(seed)
    net.flat[:] = rng.normal(scale=0.5, size=net.flat.shape)
    _, analytic = loss_and_gradient(net, F, y, w, config)
    numeric = np.empty_like(analytic)
    for i in range(len(net.flat)):
        orig = net.flat[i]
        net.flat[i] = orig + step
        lp, _ = loss_and_gradient(net, F, y, w, config)
        net.flat[i] = orig - step
        lm, _ = loss_and_gradient(net, F, y, w, config)
        net.flat[i] = orig
        numeric[i] = (lp - lm) / (2 * step)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(rel.max())


def output_bias_gradient(config, features, y):
    """Gradient of the loss w.r.t. the output bias for an all-zero network."""
    F = np.atleast_2d(np.asarray(features, dtype=float))
    net = _Net([F.shape[1], *config.hidden, 1])
    _, g = loss_and_gradient(net, F, np.asarray(y, dtype=float), np.ones(len(y)), config)
    return float(g[-1])
