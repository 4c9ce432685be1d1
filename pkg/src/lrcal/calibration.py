"""Univariate calibration of classifier scores.

Density route: estimate ``p(s | theta0)`` and ``p(s | theta1)`` from scores of
samples drawn at each parameter point (histogram or Gaussian KDE) and take
their ratio. Isotonic route: fit a monotone map from raw scores to
``P(y=1 | s)`` and invert ``r = (1 - s_iso) / s_iso``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

DEFAULT_BINS = 50
DEFAULT_EPS = 1e-6


class HistogramDensity:
    """Piecewise-constant density on fixed, uniform-width bins.

    ``heights`` are the raw normalized heights (they integrate to one).
    Evaluation returns ``max(height, eps)`` inside the range and ``eps``
    outside it.
    """

    kind = "histogram"

    def __init__(self, edges, heights, count, eps=DEFAULT_EPS):
        self.edges = np.asarray(edges, dtype=float)
        self.heights = np.asarray(heights, dtype=float)
        self.count = int(count)
        self.eps = float(eps)
        if self.edges.ndim != 1 or len(self.edges) != len(self.heights) + 1:
            raise ValueError("need len(edges) == len(heights) + 1")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if np.any(self.heights < 0):
            raise ValueError("heights must be non-negative")

    @property
    def widths(self):
        return np.diff(self.edges)

    def integral(self, floored=False):
        h = np.maximum(self.heights, self.eps) if floored else self.heights
        return float(np.sum(h * self.widths))

    def bin_index(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self.edges, u, side="right") - 1
        # the last bin is closed on the right, as in numpy.histogram
        idx = np.where(u == self.edges[-1], len(self.heights) - 1, idx)
        return idx

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        idx = self.bin_index(u)
        inside = (idx >= 0) & (idx < len(self.heights))
        h = np.where(inside, self.heights[np.clip(idx, 0, len(self.heights) - 1)], 0.0)
        return np.maximum(h, self.eps)

    def to_dict(self):
        return {"kind": self.kind, "edges": self.edges.tolist(),
                "heights": self.heights.tolist(), "count": self.count, "eps": self.eps}


def fit_histogram(scores, bins=DEFAULT_BINS, range=(0.0, 1.0), eps=DEFAULT_EPS):
    """Histogram density estimate of ``scores`` with ``bins`` uniform bins over ``range``."""
    s = np.asarray(scores, dtype=float).ravel()
    if s.size < 1:
        raise ValueError("need at least one score")
    if bins < 2:
        raise ValueError("need at least two bins")
    lo, hi = float(range[0]), float(range[1])
    if np.any(~np.isfinite(s)) or np.any(s < lo) or np.any(s > hi):
        raise ValueError(f"scores must lie in [{lo}, {hi}]")
    counts, edges = np.histogram(s, bins=int(bins), range=(lo, hi))
    heights = counts / (s.size * np.diff(edges))
    return HistogramDensity(edges, heights, s.size, eps)


class KernelDensity:
    """Gaussian KDE on ``[0, 1]`` with reflection at both ends.

    The estimate is tabulated on a regular grid by linear binning and FFT
    convolution; evaluation interpolates linearly and returns zero outside
    the support.
    """

    kind = "kde"

    def __init__(self, grid, values, bandwidth, count):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.bandwidth = float(bandwidth)
        self.count = int(count)
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.interp(u, self.grid, self.values)
        return np.where((u < self.grid[0]) | (u > self.grid[-1]), 0.0, out)

    def to_dict(self):
        return {"kind": self.kind, "grid": self.grid.tolist(), "values": self.values.tolist(),
                "bandwidth": self.bandwidth, "count": self.count}


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=float)
    sd = np.std(x, ddof=1) if x.size > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if not spread > 0:
        spread = sd if sd > 0 else 1e-3
    return 0.9 * spread * x.size ** (-0.2)


def fit_kde(scores, bandwidth=None, grid_size=None):
    """Reflected Gaussian KDE of scores in ``[0, 1]`` (Silverman bandwidth by default).

    The tabulation grid has at least 4097 points and is refined so that its
    spacing is at most an eighth of the bandwidth.
    """
    s = np.asarray(scores, dtype=float).ravel()
    if s.size < 1:
        raise ValueError("need at least one score")
    if np.any(s < 0) or np.any(s > 1):
        raise ValueError("scores must lie in [0, 1]")
    h = silverman_bandwidth(s) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if grid_size is None:
        grid_size = int(min(max(4097, np.ceil(8.0 / h) + 1), 2**22 + 1))
    delta = 1.0 / (grid_size - 1)
    pad = int(np.ceil(min(5 * h, 1.0) / delta))
    # linear binning onto grid points k * delta, k = -pad .. grid_size - 1 + pad
    pos = s / delta + pad
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    n_ext = grid_size + 2 * pad
    counts = (np.bincount(lo, weights=1 - frac, minlength=n_ext + 1)
              + np.bincount(lo + 1, weights=frac, minlength=n_ext + 1))[:n_ext]
    half = int(np.ceil(5 * h / delta))
    offs = np.arange(-half, half + 1) * delta
    kern = np.exp(-0.5 * (offs / h) ** 2) / (h * np.sqrt(2 * np.pi))
    g = fftconvolve(counts, kern, mode="same") / s.size
    g = np.maximum(g, 0.0)
    i = np.arange(grid_size)
    core = g[pad + i]
    # fold the mass that leaked past each boundary back into [0, 1]
    left = pad - i
    right = pad + 2 * (grid_size - 1) - i
    core = core + np.where(left >= 0, g[np.clip(left, 0, n_ext - 1)], 0.0)
    core = core + np.where(right < n_ext, g[np.clip(right, 0, n_ext - 1)], 0.0)
    grid = i * delta
    return KernelDensity(grid, core, h, s.size)


class IsotonicMap:
    """Non-decreasing step function fitted by pool-adjacent-violators.

    ``breakpoints[k]`` is the smallest score of block ``k``; the map takes
    ``values[k]`` on ``[breakpoints[k], breakpoints[k + 1])`` and ``values[0]``
    below the first breakpoint.
    """

    kind = "isotonic"

    def __init__(self, breakpoints, values, n0=1, n1=1):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.n0 = int(n0)
        self.n1 = int(n1)

    def __call__(self, u):
        idx = np.searchsorted(self.breakpoints, np.asarray(u, dtype=float), side="right") - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]

    def to_dict(self):
        return {"kind": self.kind, "breakpoints": self.breakpoints.tolist(),
                "values": self.values.tolist(), "n0": self.n0, "n1": self.n1}


def pool_adjacent_violators(y, w=None):
    """Weighted least-squares non-decreasing fit of the sequence ``y``.

    Returns ``(starts, values)``: the start index of each pooled block and its
    fitted value.
    """
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    vals, wts, starts = [], [], []
    for i in range(len(y)):
        vals.append(y[i])
        wts.append(w[i])
        starts.append(i)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            wv = wts[-2] + wts[-1]
            vals[-2] = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / wv
            wts[-2] = wv
            vals.pop()
            wts.pop()
            starts.pop()
    return np.array(starts, dtype=int), np.array(vals)


def fit_isotonic(scores, labels, sample_weight=None):
    """Isotonic estimate of ``P(y=1 | score)``."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels must have equal length")
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise ValueError("labels must be binary")
    if y.min() == y.max():
        raise ValueError("both classes are needed for isotonic calibration")
    w = np.ones_like(s) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    order = np.argsort(s, kind="stable")
    s, y, w = s[order], y[order], w[order]
    # tied scores are pooled before PAV so the map is a function of the score
    uniq, first = np.unique(s, return_index=True)
    wsum = np.add.reduceat(w, first)
    ysum = np.add.reduceat(w * y, first)
    starts, values = pool_adjacent_violators(ysum / wsum, wsum)
    n1 = int(np.sum(y == 1))
    return IsotonicMap(uniq[starts], np.clip(values, 0.0, 1.0), len(y) - n1, n1)


def ratio_from_isotonic(iso, raw_score, eps=DEFAULT_EPS):
    """``(1 - s_iso) / s_iso`` with ``s_iso`` clamped to ``[eps, 1 - eps]``.

    When the calibration classes were unbalanced the class-prior factor
    ``n1 / n0`` is applied so the result estimates ``p(x|theta0) / p(x|theta1)``.
    """
    s = np.clip(iso(raw_score), eps, 1.0 - eps)
    return (1.0 - s) / s * (iso.n1 / iso.n0)


@dataclass(frozen=True)
class CalibratedDensityPair:
    """Score densities under ``theta0`` (numerator) and ``theta1`` (denominator)."""

    numerator: object
    denominator: object
    theta0: tuple = ()
    theta1: tuple = ()
    eps: float = DEFAULT_EPS

    @property
    def sizes(self):
        return (self.numerator.count, self.denominator.count)

    def swapped(self):
        return CalibratedDensityPair(self.denominator, self.numerator,
                                     self.theta1, self.theta0, self.eps)

    def log_ratio(self, u):
        num = np.maximum(self.numerator(u), self.eps)
        den = np.maximum(self.denominator(u), self.eps)
        # with eps = 0 an empty bin gives an infinite value; callers report it
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(num) - np.log(den)

    def to_dict(self):
        return {"theta0": list(self.theta0), "theta1": list(self.theta1), "eps": self.eps,
                "numerator": self.numerator.to_dict(), "denominator": self.denominator.to_dict()}


def density_ratio_at(pair, u):
    """``p(u|theta0) / p(u|theta1)`` with both densities floored at ``eps``."""
    return np.exp(pair.log_ratio(u))


def fit_density_pair(scores0, scores1, method="histogram", bins=DEFAULT_BINS,
                     eps=DEFAULT_EPS, theta0=(), theta1=(), bandwidth=None):
    if method == "histogram":
        fit = lambda s: fit_histogram(s, bins=bins, eps=eps)  # noqa: E731
    elif method == "kde":
        # one bandwidth for both densities so smoothing bias largely cancels in the ratio
        h = silverman_bandwidth(np.r_[np.ravel(scores0), np.ravel(scores1)]) \
            if bandwidth is None else bandwidth
        fit = lambda s: fit_kde(s, bandwidth=h)  # noqa: E731
    else:
        raise ValueError(f"unknown density method {method!r}")
    return CalibratedDensityPair(fit(scores0), fit(scores1), tuple(theta0), tuple(theta1), eps)


def density_from_dict(d):
    if d["kind"] == "histogram":
        return HistogramDensity(d["edges"], d["heights"], d["count"], d["eps"])
    if d["kind"] == "kde":
        return KernelDensity(d["grid"], d["values"], d["bandwidth"], d["count"])
    if d["kind"] == "isotonic":
        return IsotonicMap(d["breakpoints"], d["values"], d["n0"], d["n1"])
    raise ValueError(f"unknown calibration kind {d['kind']!r}")


def pair_from_dict(d):
    return CalibratedDensityPair(density_from_dict(d["numerator"]), density_from_dict(d["denominator"]),
                                 tuple(d["theta0"]), tuple(d["theta1"]), d["eps"])
