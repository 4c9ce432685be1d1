import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lrcal.diagnostics import RocReport, reference_sweep, roc_and_auc, weighted_roc_test
from lrcal.ratio import OracleRatio, RatioEstimator


class TestRoc:
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-10, 10), st.booleans(), st.floats(0.01, 5)),
                    min_size=2, max_size=200))
    def test_endpoints_and_monotone(self, rows):
        s = np.array([r[0] for r in rows])
        y = np.array([float(r[1]) for r in rows])
        w = np.array([r[2] for r in rows])
        if y.min() == y.max():
            with pytest.raises(ValueError):
                roc_and_auc(s, y, w)
            return
        r = roc_and_auc(s, y, w)
        assert (r.fpr[0], r.tpr[0]) == (0.0, 0.0)
        assert (r.fpr[-1], r.tpr[-1]) == (1.0, 1.0)
        assert np.all(np.diff(r.fpr) >= 0) and np.all(np.diff(r.tpr) >= 0)
        assert 0.0 <= r.auc <= 1.0

    def test_perfect_separation(self):
        r = roc_and_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
        assert r.auc == 1.0
        assert roc_and_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]).auc == 0.0

    def test_uninformative_scores(self):
        rng = np.random.default_rng(0)
        r = roc_and_auc(rng.random(10_000), rng.integers(0, 2, 10_000))
        assert abs(r.auc - 0.5) <= 0.02

    def test_gaussian_closed_form(self):
        rng = np.random.default_rng(1)
        s = np.r_[rng.normal(0, 1, 50_000), rng.normal(2, 1, 50_000)]
        y = np.r_[np.zeros(50_000), np.ones(50_000)]
        assert abs(roc_and_auc(s, y).auc - stats.norm.cdf(2 / np.sqrt(2))) <= 0.02

    @pytest.mark.parametrize("f", [np.exp, lambda v: 3.0 * v - 7.0, np.arctan])
    def test_invariant_under_increasing_maps(self, f):
        rng = np.random.default_rng(2)
        s = rng.normal(size=2000)
        y = (rng.random(2000) < 1 / (1 + np.exp(-s))).astype(float)
        w = rng.uniform(0.1, 2, 2000)
        assert roc_and_auc(f(s), y, w).auc == pytest.approx(roc_and_auc(s, y, w).auc, abs=1e-12)

    def test_ties_get_half_credit(self):
        assert roc_and_auc([0.5, 0.5], [0, 1]).auc == pytest.approx(0.5)

    def test_integer_weights_equal_replication(self):
        rng = np.random.default_rng(3)
        s = rng.normal(size=300)
        y = rng.integers(0, 2, 300)
        k = rng.integers(1, 4, 300)
        a = roc_and_auc(s, y, k.astype(float)).auc
        b = roc_and_auc(np.repeat(s, k), np.repeat(y, k)).auc
        assert a == pytest.approx(b, abs=1e-12)

    def test_bad_input(self):
        with pytest.raises(ValueError):
            roc_and_auc([0.1, 0.2], [0, 1, 1])
        with pytest.raises(ValueError):
            roc_and_auc([0.1, 0.2], [0, 1], [-1.0, 1.0])
        with pytest.raises(ValueError):
            roc_and_auc([0.1, 0.2], [1, 1])

    def test_report_rows(self):
        r = roc_and_auc([0.1, 0.9], [0, 1], mode="exact-ratio")
        assert isinstance(r, RocReport) and r.mode == "exact-ratio"
        assert r.to_rows()[0] == (0.0, 0.0)


class TestReferenceSweep:
    def test_oracle_curves_identical(self, multidim):
        D = multidim.simulate([1.0, -1.0], 500, 11)
        grid = np.c_[np.linspace(0.5, 1.5, 21), np.full(21, -1.0)]
        refs = [[0.0, 0.0], [0.5, -0.5], [1.5, -1.5]]
        sw = reference_sweep(D, grid, refs, OracleRatio(multidim))
        assert sw.max_discrepancy() <= 1e-12 * max(1.0, sw.curves[0].values.max())
        assert all(not sw.exits_band(k) for k in range(3))
        assert sw.references[1] == (0.5, -0.5)
        assert np.array_equal(sw.grid, grid)

    def test_needs_two_references(self, mixture):
        with pytest.raises(ValueError):
            reference_sweep(np.zeros((5, 1)), [[0.1]], [[0.0]], OracleRatio(mixture))

    def test_band_fraction_bookkeeping(self, mixture):
        D = mixture.simulate([0.05], 200, 3)
        sw = reference_sweep(D, np.linspace(0, 0.3, 11), [[0.0], [0.2]], OracleRatio(mixture),
                             fit_gp=False)
        assert np.all(sw.band_std == 0)
        sw.gp_stds[0][:] = 1e-9  # curves differ only by round-off
        assert sw.fraction_inside(1) == 1.0
        sw.curves[1].values[:5] += 1.0
        assert sw.fraction_inside(1) == pytest.approx(6 / 11)
        assert sw.exits_band(1)

    def test_spread_shrinks_with_calibration_size(self, mixture, param_classifier):
        grid = np.linspace(0.0, 0.2, 9)
        refs = [[0.0], [0.1], [0.25]]
        medians = []
        for n_cal in (1_000, 10_000, 100_000):
            spreads = []
            for seed in range(5):
                D = mixture.simulate([0.05], 500, 100 + seed)
                est = RatioEstimator(param_classifier, mixture, n_calibration=n_cal, seed=seed)
                spreads.append(reference_sweep(D, grid, refs, est, fit_gp=False).spread())
            medians.append(np.median(spreads))
        assert medians[0] > medians[1] > medians[2]


class TestWeightedRoc:
    def test_oracle_weights_indistinguishable(self, mixture):
        r = weighted_roc_test(mixture, [0.5], [0.0], "oracle", n=10_000, seed=1)
        assert abs(r.auc - 0.5) <= 0.03
        assert r.mode == "exact-ratio"
        assert r.meta["effective_sample_size"] > 1000

    def test_unweighted_separated(self, mixture):
        r = weighted_roc_test(mixture, [1.0], [0.0], "none", n=10_000, seed=2)
        assert r.auc >= 0.6 and r.mode == "unweighted"

    def test_identical_hypotheses(self, mixture):
        r = weighted_roc_test(mixture, [0.3], [0.3], "none", n=10_000, seed=3)
        assert 0.47 <= r.auc <= 0.53

    def test_estimator_weights_close_to_oracle(self, mixture, decomposed):
        est = weighted_roc_test(mixture, [0.5], [0.0], "estimator", n=10_000, seed=4,
                                estimator=decomposed)
        ora = weighted_roc_test(mixture, [0.5], [0.0], "oracle", n=10_000, seed=4)
        assert est.mode == "approximate-ratio"
        assert abs(est.auc - ora.auc) <= 0.05

    def test_zero_weights_rejected(self, mixture):
        class Zero:
            def log_ratio(self, X, t0, t1):
                return np.full(len(X), -1e4)

        with pytest.raises(ValueError, match="degenerate"):
            weighted_roc_test(mixture, [0.5], [0.0], "estimator", n=200, estimator=Zero())

    def test_concentrated_weights_flagged(self, mixture):
        class Spike:
            def log_ratio(self, X, t0, t1):
                v = np.zeros(len(X))
                v[0] = 50.0
                return v

        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            r = weighted_roc_test(mixture, [0.5], [0.0], "estimator", n=200, estimator=Spike())
        assert r.meta["degenerate"]
        assert any("effective size" in str(w.message) for w in rec)

    def test_argument_checks(self, mixture):
        with pytest.raises(ValueError):
            weighted_roc_test(mixture, [0.5], [0.0], "magic")
        with pytest.raises(ValueError):
            weighted_roc_test(mixture, [0.5], [0.0], "none", n=50)
        with pytest.raises(ValueError):
            weighted_roc_test(mixture, [0.5], [0.0], "estimator", n=200)

    def test_seeded(self, mixture):
        a = weighted_roc_test(mixture, [0.5], [0.0], "oracle", n=500, seed=7)
        b = weighted_roc_test(mixture, [0.5], [0.0], "oracle", n=500, seed=7)
        assert a.auc == b.auc and np.array_equal(a.fpr, b.fpr)
