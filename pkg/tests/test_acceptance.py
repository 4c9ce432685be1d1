"""End-to-end acceptance criteria, each printing one PASS/FAIL line."""

import json
import os
import time

import numpy as np
import pytest
from scipy import stats
from scipy.special import logsumexp

from conftest import quiet_train
from lrcal import cli, io
from lrcal.calibration import fit_histogram, fit_isotonic
from lrcal.classifier import (ClassifierConfig, GridPrior, PointPrior, UniformPrior,
                              build_training_set, gradient_check, logistic_config)
from lrcal.diagnostics import reference_sweep, roc_and_auc, weighted_roc_test
from lrcal.inference import ensemble_study, mle_bayesopt, mle_grid, refine_mle
from lrcal.ratio import DecomposedRatioEstimator, OracleRatio, RatioEstimator, fit_pairwise
from lrcal.simulators import MultidimModel, UnivariateMixture

G0, G1 = [0.05], [0.0]
REFS_5D = [[0.0, 0.0], [0.5, -0.5], [1.5, -1.5]]
BOUNDS_5D = [[0.5, 1.5], [-1.5, -0.5]]


def _mixture_eval(m, seed=12345):
    x = m.sample(G0, 10_000, seed)
    true = m.log_density(x, G0) - m.log_density(x, G1)
    bulk = np.exp(m.log_density(x, G1)) > 1e-3
    return x, true, bulk


@pytest.fixture(scope="module")
def mix():
    return UnivariateMixture()


@pytest.fixture(scope="module")
def decomposed_full(mix):
    t = time.perf_counter()
    est = fit_pairwise(mix.components, mix.component_weights, 200_000, ClassifierConfig(seed=0),
                       calibration="histogram", n_calibration=100_000, seed=0)
    return est, time.perf_counter() - t


@pytest.fixture(scope="module")
def ensembles(mix, decomposed_full):
    grid = np.linspace(0.0, 0.3, 601)
    out = {}
    for name, est in (("oracle", OracleRatio(mix)), ("approx", decomposed_full[0])):
        t = time.perf_counter()
        out[name] = ensemble_study(mix, G0, 500, 1000, est, grid, G1, seed=2024, workers=4)
        out[name + "_time"] = time.perf_counter() - t
    return out


@pytest.fixture(scope="module")
def five():
    return MultidimModel()


@pytest.fixture(scope="module")
def five_setup(five):
    """Parameterized 5D classifier: theta1 restricted to the reference points."""
    ts = build_training_set(five, UniformPrior([0.0, -2.0], [2.0, 0.0]), GridPrior(REFS_5D),
                            1_000_000, seed=3)
    nn = quiet_train(ts, ClassifierConfig(epochs=20, seed=3))
    weak = quiet_train(ts, logistic_config(seed=4))
    data = five.simulate([1.0, -1.0], 500, 11)
    return ts, nn, weak, data


def test_criterion_01_ratio_accuracy_1d(mix, decomposed_full, acceptance):
    est, fit_time = decomposed_full
    x, true, bulk = _mixture_eval(mix)
    t = time.perf_counter()
    err = np.abs(est.log_ratio(x, G0, G1) - true)[bulk]
    runtime = fit_time + time.perf_counter() - t
    med, p90 = np.median(err), np.quantile(err, 0.9)
    ok = med <= 0.1 and p90 <= 0.3 and runtime <= 300
    acceptance(1, ok, f"median={med:.4g} (<=0.1) p90={p90:.4g} (<=0.3) runtime={runtime:.0f}s")
    assert ok


def test_criterion_02_calibration_ordering(mix, acceptance):
    x, true, bulk = _mixture_eval(mix)
    meds = []
    for seed in range(5):
        dec = fit_pairwise(mix.components, mix.component_weights, 200_000,
                           ClassifierConfig(seed=seed), n_calibration=100_000, seed=seed)
        ts = build_training_set(mix, PointPrior(G0), PointPrior(G1), 200_000, seed=seed)
        clf = quiet_train(ts.x, ClassifierConfig(seed=seed), y=ts.y)
        cal = RatioEstimator(clf, mix, seed=seed)
        med = lambda v: np.median(np.abs(v - true)[bulk])  # noqa: E731
        meds.append((med(dec.log_ratio(x, G0, G1)), med(cal.log_ratio(x, G0, G1)),
                     med(cal.uncalibrated_log_ratio(x, G0, G1))))
    meds = np.array(meds)
    detail, ok = [], True
    for label, gap in (("cal-dec", meds[:, 1] - meds[:, 0]), ("uncal-cal", meds[:, 2] - meds[:, 1])):
        se = gap.std(ddof=1) / np.sqrt(len(gap))
        z = gap.mean() / se if se > 0 else np.inf * np.sign(gap.mean())
        ok &= bool(gap.mean() - 3 * se >= 0)
        detail.append(f"{label} mean gap={gap.mean():.4g} ({z:.2f} SE)")
    acceptance(2, ok, "; ".join(detail) + " (need >= 3 SE)")
    assert ok


def test_criterion_03_mle_ensemble(ensembles, acceptance):
    go = ensembles["oracle"].mles[:, 0]
    ga = ensembles["approx"].mles[:, 0]
    dmean = abs(ga.mean() - go.mean())
    ratio = ga.std(ddof=1) / go.std(ddof=1)
    runtime = ensembles["oracle_time"] + ensembles["approx_time"]
    ok = (dmean <= 0.005 and 0.8 <= ratio <= 1.25 and runtime <= 1200
          and not ensembles["approx"].failures)
    acceptance(3, ok, f"|mean diff|={dmean:.4g} (<=0.005) std ratio={ratio:.4f} ([0.8,1.25]) "
                      f"runtime={runtime:.0f}s")
    assert ok


def test_criterion_04_wilks(ensembles, acceptance):
    chi2 = stats.chi2(1)
    ks_o = stats.kstest(ensembles["oracle"].neg2_at_true, chi2.cdf).statistic
    ks_a = stats.kstest(ensembles["approx"].neg2_at_true, chi2.cdf).statistic
    med_o = np.median(ensembles["oracle"].neg2_at_true)
    med_a = np.median(ensembles["approx"].neg2_at_true)
    ok = ks_a <= 0.06 and ks_o <= 0.05 and abs(med_o - 0.455) <= 0.1 and abs(med_a - 0.455) <= 0.1
    acceptance(4, ok, f"KS approx={ks_a:.4f} (<=0.06) oracle={ks_o:.4f} (<=0.05) "
                      f"median approx={med_a:.3f} oracle={med_o:.3f} (0.455+-0.10)")
    assert ok


def test_criterion_05_inference_5d(five, five_setup, acceptance):
    _, nn, _, D = five_setup
    t = time.perf_counter()
    orc = OracleRatio(five)
    axes = [np.linspace(lo, hi, 101) for lo, hi in BOUNDS_5D]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2)
    start = mle_grid(D, grid, [0.0, 0.0], orc)
    exact = refine_mle(D, start, BOUNDS_5D, [0.0, 0.0], orc)
    est = RatioEstimator(nn, five, seed=5)
    approx, _ = mle_bayesopt(D, BOUNDS_5D, 50, [0.0, 0.0], est, seed=7)
    dist = float(np.linalg.norm(approx - exact))
    ll = lambda th: np.sum(orc.log_ratio(D.data, th, [0.0, 0.0]))  # noqa: E731
    q_true = -2.0 * (ll([1.0, -1.0]) - ll(exact))
    limit = stats.chi2(2).ppf(0.997)
    runtime = time.perf_counter() - t
    ok = dist <= 0.15 and q_true <= limit and runtime <= 900
    acceptance(5, ok, f"oracle MLE={np.round(exact, 4).tolist()} BO MLE={np.round(approx, 4).tolist()} "
                      f"distance={dist:.4f} (<=0.15) -2logL(true)={q_true:.3f} (<={limit:.2f}) "
                      f"runtime={runtime:.0f}s")
    assert ok


def test_criterion_06_decomposition_identity(mix, acceptance):
    rng = np.random.default_rng(6)
    x = rng.uniform(-6, 6, (10_000, 1))
    g = rng.random((10_000, 2))
    dec = DecomposedRatioEstimator.from_oracle(mix)
    W = mix.weights(g)
    logp = np.stack([c.logpdf(x.ravel()) for c in mix.components], axis=1)
    direct = logsumexp(logp, b=W[:, 0], axis=1) - logsumexp(logp, b=W[:, 1], axis=1)
    L = dec.component_log_ratios(x)
    got = np.array([dec.combine(L[:, :, i:i + 1], W[i, 0], W[i, 1])[0] for i in range(len(x))])
    err = float(np.max(np.abs(got - direct)))
    ok = err <= 1e-12
    acceptance(6, ok, f"max |decomposed - direct| = {err:.3g} over 10^4 points (<=1e-12)")
    assert ok


def test_criterion_07_reference_independence(five, five_setup, acceptance):
    _, nn, _, D = five_setup
    grid = np.c_[np.linspace(0.5, 1.5, 21), np.full(21, -1.0)]
    osw = reference_sweep(D, grid, REFS_5D, OracleRatio(five), fit_gp=False)
    odiff = osw.max_discrepancy()
    est = RatioEstimator(nn, five, seed=5, common_random_numbers=False)
    sw = reference_sweep(D, grid, REFS_5D, est, seed=0)
    inside = [sw.fraction_inside(k) for k in range(len(REFS_5D))]
    ok = odiff <= 1e-12 and min(inside) >= 0.8
    acceptance(7, ok, f"oracle max discrepancy={odiff:.3g} (<=1e-12) approx fraction inside "
                      f"+-2 sd={np.round(inside, 3).tolist()} (each >=0.8)")
    assert ok


def test_criterion_08_diagnostic_roc(five, five_setup, acceptance):
    _, nn, weak, _ = five_setup
    t0, t1 = [1.0, -1.0], [0.0, 0.0]
    roc = lambda w, est=None: weighted_roc_test(five, t0, t1, w, n=10_000, seed=8,  # noqa: E731
                                                estimator=est).auc
    oracle, unweighted = roc("oracle"), roc("none")
    well = roc("estimator", RatioEstimator(nn, five, seed=5))
    degraded = {
        "poorly_trained": roc("estimator", RatioEstimator(weak, five, seed=5)),
        "poorly_calibrated": roc("estimator", RatioEstimator(nn, five, bins=5, n_calibration=500,
                                                             seed=5)),
    }
    # same yardstick as the well regime: signed distance from the oracle-weight AUC
    worse = {k: v - oracle for k, v in degraded.items()}
    ok = (0.47 <= oracle <= 0.53 and unweighted >= 0.6 and abs(well - oracle) <= 0.05
          and max(worse.values()) >= 0.05)
    acceptance(8, ok, f"AUC oracle={oracle:.4f} unweighted={unweighted:.4f} well={well:.4f} "
                      + " ".join(f"{k}={degraded[k]:.4f} ({worse[k]:+.3f})" for k in degraded))
    assert ok


def test_criterion_09_numerics(acceptance):
    rng = np.random.default_rng(9)
    F = rng.normal(size=(32, 3))
    y = (rng.random(32) < 0.5).astype(float)
    grad = max(gradient_check(ClassifierConfig(hidden=h, loss=loss), F, y, seed=s)
               for h in [(16, 16), (5,), ()] for loss in ("cross_entropy", "squared_error")
               for s in range(2))
    hist = max(abs(fit_histogram(rng.random(int(n)) ** p, bins=b).integral() - 1.0)
               for n, p, b in [(10, 1, 50), (1000, 3, 7), (10**5, 0.2, 50), (1, 1, 2)])
    mono = True
    for k in range(20):
        s = rng.random(500)
        lab = (rng.random(500) < rng.random() * s).astype(float)
        lab[:2] = [0.0, 1.0]
        v = fit_isotonic(s, lab, sample_weight=rng.uniform(0.1, 3, 500))(np.linspace(-0.1, 1.1, 20001))
        mono &= bool(np.all(np.diff(v) >= 0))
    roc_ok = True
    for k in range(200):
        n = int(rng.integers(2, 300))
        lab = rng.integers(0, 2, n)
        lab[:2] = [0, 1]
        r = roc_and_auc(np.round(rng.normal(size=n), int(rng.integers(0, 3))), lab, rng.random(n) + 1e-3)
        roc_ok &= bool(r.fpr[0] == r.tpr[0] == 0 and r.fpr[-1] == r.tpr[-1] == 1
                       and np.all(np.diff(r.fpr) >= 0) and np.all(np.diff(r.tpr) >= 0))
    s = np.r_[rng.normal(0, 1, 50_000), rng.normal(2, 1, 50_000)]
    auc = roc_and_auc(s, np.r_[np.zeros(50_000), np.ones(50_000)]).auc
    target = stats.norm.cdf(2 / np.sqrt(2))
    ok = grad < 1e-5 and hist <= 1e-12 and mono and roc_ok and abs(auc - target) <= 0.02
    acceptance(9, ok, f"gradient rel err={grad:.2g} (<1e-5) histogram |1-integral|={hist:.2g} "
                      f"isotonic monotone={mono} ROC contracts={roc_ok} Gaussian AUC={auc:.4f} "
                      f"vs {target:.4f}")
    assert ok


def test_criterion_10_cli_determinism(tmp_path, acceptance):
    tmp = str(tmp_path)
    small = {"classifier": {"epochs": 2}, "training": {"n_train": 10_000},
             "calibration": {"n_calibration": 3000}, "ratio": {"n_points": 300}}
    five_cfg = {"model": {"name": "5d", "theta": [1.0, -1.0]}}
    runs = []

    def go(name, command, cfg):
        path = os.path.join(tmp, name + ".json")
        with open(path, "w") as fh:
            json.dump(cfg, fh)
        out = os.path.join(tmp, name)
        assert cli.main([command, "--config", path, "--out", out]) == 0, name
        runs.append((name, command, out))
        return out

    go("simulate", "simulate", five_cfg)
    clf = os.path.join(go("train", "train", small), "classifier.json")
    go("calibrate", "calibrate", dict(small, inputs={"classifier": clf}))
    go("ratio", "ratio", dict(small, inputs={"classifier": clf}))
    dec = os.path.join(go("train_dec", "train", dict(small, training={"n_train": 10_000,
                                                                      "mode": "decomposed"})),
                       "decomposed.json")
    grid1d = {"grid": {"low": [0.0], "high": [0.3], "num": [31]}}
    go("infer", "infer", {"ratio": {"estimator": "decomposed"}, "inputs": {"decomposed": dec},
                          "infer": grid1d})
    go("infer_bo", "infer", dict(five_cfg, ratio={"estimator": "oracle"}, infer={
        "method": "bayesopt", "budget": 12, "theta_ref": [0.0, 0.0],
        "grid": {"low": [0.5, -1.5], "high": [1.5, -0.5], "num": [3, 3]}}))
    go("ensemble", "ensemble", {"ratio": {"estimator": "oracle"}, "infer": grid1d,
                                "ensemble": {"replicates": 6, "n_per_dataset": 100}, "workers": 2})
    go("diagnose", "diagnose", dict(small, **five_cfg, training={
        "n_train": 10_000, "prior0": {"kind": "uniform", "low": [0, -2], "high": [2, 0]}},
        diagnose={"roc_n": 500, "discriminator_epochs": 2, "require_pass": [],
                  "grid": {"low": [0.5, -1.0], "high": [1.5, -1.0], "num": [4, 1]}}))
    mismatched = []
    for name, command, out in runs:
        replay = out + "_replay"
        code = cli.main([command, "--config", os.path.join(out, "manifest.json"), "--out", replay])
        a = io.read_json(os.path.join(out, "manifest.json"))["artifacts"]
        b = io.read_json(os.path.join(replay, "manifest.json"))["artifacts"] if code == 0 else {}
        if code != 0 or a != b or not a:
            mismatched.append(name)
    commands = sorted({c for _, c, _ in runs})
    ok = not mismatched and len(commands) == 7
    acceptance(10, ok, f"{len(runs)} runs over {len(commands)} commands replayed from manifests; "
                       f"mismatches={mismatched}")
    assert ok
