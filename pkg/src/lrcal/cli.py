"""Command-line front end.

Every command reads one JSON config (see :mod:`lrcal.config` for the full
schema of defaults), writes CSV/JSON artifacts into ``--out`` and finishes by
writing ``manifest.json``. The manifest embeds the resolved config, so
``lrcal <command> --config OUT/manifest.json --out OTHER`` replays the run.

Exit codes: 0 success, 2 config error, 3 missing input, 4 numeric failure,
5 diagnostic verdict failed.
"""

import argparse
import hashlib
import logging
import os
import sys
import time
import warnings

import numpy as np

from . import __version__, _seeding
from . import config as config_mod
from . import io
from .classifier import (ClassifierConfig, ConvergenceWarning, GridPrior, ParameterizedClassifier,
                         TrainingDivergedError, build_training_set, logistic_config,
                         prior_from_dict, train)
from .calibration import density_from_dict, pair_from_dict
from .config import ConfigError
from .gp import GPFitError
from .inference import (FailureCapExceeded, ensemble_study, mle_bayesopt, mle_grid,
                        neg2_log_lambda_curve, refine_mle, gp_curve)
from .ratio import (DecomposedRatioEstimator, MissingCalibrationError, OracleRatio,
                    RatioEstimator, fit_pairwise)
from .simulators import load_projection, make_model

log = logging.getLogger("lrcal")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4
EXIT_DIAGNOSTIC = 5

COMMANDS = ("simulate", "train", "calibrate", "ratio", "infer", "ensemble", "diagnose")


class MissingInput(FileNotFoundError):
    pass


class DiagnosticFailed(RuntimeError):
    pass


# Run context ----------------------------------------------------------------

class Run:
    """Output directory bookkeeping: artifact list, timings and the manifest."""

    def __init__(self, command, cfg, out):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.artifacts = []
        self.timings = {}
        self.summary = {}
        self._t0 = time.perf_counter()

    def path(self, name):
        p = os.path.join(self.out, name)
        self.artifacts.append(name)
        return p

    def csv(self, name, header, rows):
        io.write_csv(self.path(name), header, rows)

    def json(self, name, obj):
        io.write_json(self.path(name), obj)

    def timed(self, label):
        run = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[label] = round(time.perf_counter() - self.t, 3)

        return _T()

    def finish(self):
        self.timings["total"] = round(time.perf_counter() - self._t0, 3)
        files = {}
        for name in sorted(set(self.artifacts)):
            with open(os.path.join(self.out, name), "rb") as fh:
                files[name] = hashlib.sha256(fh.read()).hexdigest()
        io.write_json(os.path.join(self.out, "manifest.json"), {
            "manifest_version": 1,
            "command": self.command,
            "config": self.cfg,
            "artifacts": files,
            "timings": self.timings,
            "software": {"lrcal": __version__, "numpy": np.__version__},
            "summary": self.summary,
        })


# Builders -------------------------------------------------------------------

def _need(path, what):
    if path is None:
        raise MissingInput(f"inputs.{what} is required for this command")
    if not os.path.exists(path):
        raise MissingInput(f"inputs.{what}: file not found: {path}")
    return path


def build_model(cfg):
    m = cfg["model"]
    R = None
    if m["projection"] is not None:
        if not os.path.exists(m["projection"]):
            raise MissingInput(f"model.projection: file not found: {m['projection']}")
        try:
            R = load_projection(m["projection"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"model.projection: {exc}") from exc
    model = make_model(m["name"], R)
    try:
        model.check_theta(m["theta"])
    except ValueError as exc:
        raise ConfigError(f"model.theta: {exc}") from exc
    return model


def _theta(cfg_value, model, field):
    t = np.asarray(cfg_value, dtype=float).ravel()
    try:
        model.check_theta(t)
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from exc
    return t


def classifier_config(cfg, stream=0, logistic=False):
    c = dict(cfg["classifier"])
    c["hidden"] = tuple(c["hidden"])
    seed = _seeding.subseed(cfg["seed"], _seeding.STREAM_INIT, stream)
    try:
        if logistic:
            c.pop("hidden")
            return logistic_config(seed=seed, **c)
        return ClassifierConfig(seed=seed, **c)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"classifier: {exc}") from exc


def load_data(cfg, model):
    path = cfg["inputs"]["data"]
    if path is None:
        theta = _theta(cfg["model"]["theta"], model, "model.theta")
        return model.simulate(theta, cfg["n"], _seeding.subseed(cfg["seed"], _seeding.STREAM_DATA))
    _need(path, "data")
    try:
        ss = io.read_samples_bin(path) if path.endswith(".bin") else io.read_samples_csv(path)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"inputs.data: {exc}") from exc
    if ss.data.shape[1] != model.n_features:
        raise ConfigError(f"inputs.data: expected {model.n_features} columns, got {ss.data.shape[1]}")
    return ss


def _calibration_kwargs(cfg):
    c = cfg["calibration"]
    return dict(calibration=c["method"], n_calibration=c["n_calibration"], bins=c["bins"],
                eps=c["eps"], bandwidth=c["bandwidth"],
                common_random_numbers=c["common_random_numbers"],
                seed=_seeding.subseed(cfg["seed"], _seeding.STREAM_CALIBRATION))


def _load_classifier(path):
    try:
        return ParameterizedClassifier.load(_need(path, "classifier"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"inputs.classifier: {exc}") from exc


def build_estimator(cfg, model, kind=None):
    kind = kind or cfg["ratio"]["estimator"]
    if kind == "oracle":
        return OracleRatio(model)
    if kind == "decomposed":
        if not hasattr(model, "component_weights"):
            raise ConfigError("ratio.estimator: decomposition needs the 1d mixture model")
        d = io.read_json(_need(cfg["inputs"]["decomposed"], "decomposed"))
        return DecomposedRatioEstimator.from_dict(d, model.component_weights)
    clf = _load_classifier(cfg["inputs"]["classifier"])
    est = RatioEstimator(clf, model, **_calibration_kwargs(cfg))
    if cfg["inputs"]["calibration"] is not None:
        d = io.read_json(_need(cfg["inputs"]["calibration"], "calibration"))
        try:
            if d["method"] != cfg["calibration"]["method"]:
                raise ValueError(f"file holds a {d['method']} calibration, config asks for "
                                 f"{cfg['calibration']['method']}")
            calib = density_from_dict(d["calibration"]) if d["method"] == "isotonic" \
                else pair_from_dict(d["calibration"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"inputs.calibration: {exc}") from exc
        est.set_calibration(d["theta0"], d["theta1"], calib)
    return est


def build_grid(spec, model, field):
    low = np.asarray(spec["low"], dtype=float)
    high = np.asarray(spec["high"], dtype=float)
    num = np.asarray(spec["num"], dtype=int)
    if not (low.shape == high.shape == num.shape == (model.n_params,)):
        raise ConfigError(f"{field}: low/high/num must each have {model.n_params} entries")
    if np.any(num < 1) or np.any(high < low) or np.any((num > 1) & (high == low)):
        raise ConfigError(f"{field}: need num >= 1 and low < high for every scanned axis")
    axes = [np.linspace(lo, hi, k) for lo, hi, k in zip(low, high, num)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    for t in (low, high):
        _theta(t, model, field)
    return grid, np.c_[low, high]


def _theta_header(model, prefix="theta"):
    return [f"{prefix}{j}" for j in range(model.n_params)]


# Commands -------------------------------------------------------------------

def cmd_simulate(run, cfg):
    model = build_model(cfg)
    theta = _theta(cfg["model"]["theta"], model, "model.theta")
    with run.timed("simulate"):
        ss = model.simulate(theta, cfg["n"], _seeding.subseed(cfg["seed"], _seeding.STREAM_DATA))
    io.write_samples_csv(run.path("samples.csv"), ss)
    io.write_samples_bin(run.path("samples.bin"), ss)
    run.summary = {"n": len(ss), "theta": list(ss.theta), "column_means": ss.data.mean(0).tolist()}


def cmd_train(run, cfg):
    model = build_model(cfg)
    t = cfg["training"]
    if t["mode"] == "decomposed":
        if not hasattr(model, "components"):
            raise ConfigError("training.mode: decomposition needs the 1d mixture model")
        c = cfg["calibration"]
        with run.timed("train"):
            est = fit_pairwise(model.components, model.component_weights, t["n_train"],
                               classifier_config(cfg), c["method"], c["n_calibration"], c["bins"],
                               c["eps"], seed=_seeding.subseed(cfg["seed"], _seeding.STREAM_TRAIN))
        run.json("decomposed.json", est.to_dict())
        run.csv("pairs.csv", ["c", "c_prime", "heldout_auc"],
                [(a, b, p.auc) for (a, b), p in sorted(est.pairs.items())])
        run.summary = {"pair_auc": {f"{a}-{b}": p.auc for (a, b), p in sorted(est.pairs.items())}}
        return
    try:
        p0, p1 = prior_from_dict(t["prior0"]), prior_from_dict(t["prior1"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"training.prior0/prior1: {exc}") from exc
    with run.timed("training_set"):
        ts = build_training_set(model, p0, p1, t["n_train"],
                                _seeding.subseed(cfg["seed"], _seeding.STREAM_TRAIN))
    with run.timed("train"):
        clf = train(ts, classifier_config(cfg))
    run.json("classifier.json", clf.to_dict())
    run.csv("history.csv", ["epoch", "loss", "heldout_auc"], clf.history)
    run.summary = {"converged": clf.converged, "final_loss": clf.history[-1][1] if clf.history else None}


def _density_rows(pair, m):
    u = np.linspace(0.0, 1.0, m)
    return [(a, b, c) for a, b, c in zip(u, pair.numerator(u), pair.denominator(u))]


def cmd_calibrate(run, cfg):
    model = build_model(cfg)
    if cfg["ratio"]["estimator"] == "decomposed":
        est = build_estimator(cfg, model, "decomposed")
        for (a, b), p in sorted(est.pairs.items()):
            if p.calibration != "isotonic":
                run.csv(f"pair_{a}_{b}_score_density.csv", ["u", f"p_c{a}", f"p_c{b}"],
                        _density_rows(p.pair, cfg["ratio"]["density_points"]))
        return
    clf = _load_classifier(cfg["inputs"]["classifier"])
    est = RatioEstimator(clf, model, **_calibration_kwargs(cfg))
    t0 = _theta(cfg["ratio"]["theta0"], model, "ratio.theta0")
    t1 = _theta(cfg["ratio"]["theta1"], model, "ratio.theta1")
    with run.timed("calibrate"):
        calib = est.fit_calibration(t0, t1)
    run.json("calibration.json", {"theta0": t0.tolist(), "theta1": t1.tolist(),
                                  "method": cfg["calibration"]["method"],
                                  "calibration": calib.to_dict()})
    if cfg["calibration"]["method"] != "isotonic":
        run.csv("score_density.csv", ["u", "p_theta0", "p_theta1"],
                _density_rows(calib, cfg["ratio"]["density_points"]))


def _err_summary(a, b):
    e = np.abs(np.asarray(a) - np.asarray(b))
    return {"median_abs_error": float(np.median(e)), "p90_abs_error": float(np.quantile(e, 0.9))}


def cmd_ratio(run, cfg):
    model = build_model(cfg)
    kind = cfg["ratio"]["estimator"]
    t0 = _theta(cfg["ratio"]["theta0"], model, "ratio.theta0")
    t1 = _theta(cfg["ratio"]["theta1"], model, "ratio.theta1")
    est = build_estimator(cfg, model)
    X = model.sample(t0, cfg["ratio"]["n_points"],
                     _seeding.substream(cfg["seed"], _seeding.STREAM_HOLDOUT))
    with run.timed("ratio"):
        lr_hat = est.log_ratio(X, t0, t1)
    lr_orc = OracleRatio(model).log_ratio(X, t0, t1)
    header = [f"x{j}" for j in range(X.shape[1])] + ["log_r_hat"]
    cols = [lr_hat]
    if kind == "approximate":
        header.append("log_r_uncal")
        cols.append(est.uncalibrated_log_ratio(X, t0, t1))
    header.append("log_r_oracle")
    cols.append(lr_orc)
    rows = np.column_stack([X] + cols)
    run.csv("ratio_report.csv", header, rows.tolist())
    report = {"estimator": kind, "theta0": t0.tolist(), "theta1": t1.tolist(),
              "calibrated": _err_summary(lr_hat, lr_orc)}
    if kind == "approximate":
        with open(cfg["inputs"]["classifier"], "rb") as fh:
            report["classifier_sha256"] = hashlib.sha256(fh.read()).hexdigest()
        report["uncalibrated"] = _err_summary(cols[1], lr_orc)
        report["calibration"] = {k: v for k, v in cfg["calibration"].items()}
    if kind == "decomposed":
        report["pairs"] = []
        for (a, b), p in sorted(est.pairs.items()):
            report["pairs"].append({"components": [a, b], "heldout_auc": p.auc})
            if p.calibration != "isotonic":
                run.csv(f"pair_{a}_{b}_score_density.csv", ["u", f"p_c{a}", f"p_c{b}"],
                        _density_rows(p.pair, cfg["ratio"]["density_points"]))
    run.json("ratio_report.json", report)
    run.summary = report["calibrated"]


def cmd_infer(run, cfg):
    model = build_model(cfg)
    inf = cfg["infer"]
    D = load_data(cfg, model)
    ref = _theta(inf["theta_ref"], model, "infer.theta_ref")
    grid, bounds = build_grid(inf["grid"], model, "infer.grid")
    est = build_estimator(cfg, model)
    th = _theta_header(model)
    result = {"estimator": cfg["ratio"]["estimator"], "theta_ref": ref.tolist(), "n": len(D)}
    if inf["method"] == "grid":
        with run.timed("grid"):
            curve = neg2_log_lambda_curve(D, grid, ref, est)
        run.csv("curve.csv", th + ["neg2_log_lambda", "log_ratio"], curve.rows())
        result["grid_mle"] = curve.thetas[int(np.argmax(curve.log_ratios))].tolist()
        if inf["refine"]:
            scanned = bounds[:, 1] > bounds[:, 0]
            with run.timed("refine"):
                result["refined_mle"] = refine_mle(D, result["grid_mle"], bounds, ref, est).tolist() \
                    if np.all(scanned) else result["grid_mle"]
    else:
        if np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ConfigError("infer.grid: bayesopt needs low < high on every axis")
        if inf["budget"] < inf["n_init"]:
            raise ConfigError("infer.budget: must be at least infer.n_init")
        with run.timed("bayesopt"):
            x, res = mle_bayesopt(D, bounds, inf["budget"], ref, est, seed=cfg["seed"],
                                  n_init=inf["n_init"])
        run.csv("evaluations.csv", th + ["neg2_log_ratio"],
                [(*a, b) for a, b in zip(res.X.tolist(), res.y.tolist())])
        mu, sd = gp_curve(res, grid)
        run.csv("gp_grid.csv", th + ["gp_mean", "gp_std"],
                [(*a, m, s) for a, m, s in zip(grid.tolist(), mu.tolist(), sd.tolist())])
        result.update({"bayesopt_mle": x.tolist(), "best_observed": res.best_observed.tolist(),
                       "gp": {k: v for k, v in res.gp.to_dict().items() if k not in ("X", "y")},
                       "gp_noise_level": res.gp.noise_level})
    if hasattr(model, "log_density") and cfg["ratio"]["estimator"] != "oracle":
        orc = OracleRatio(model)
        g = mle_grid(D, grid, ref, orc)
        result["oracle_grid_mle"] = g.tolist()
        if np.all(bounds[:, 1] > bounds[:, 0]):
            result["oracle_refined_mle"] = refine_mle(D, g, bounds, ref, orc).tolist()
    run.json("mle.json", result)
    run.summary = {k: v for k, v in result.items() if "mle" in k}


def _ks_chi2(values, dof):
    from scipy import stats

    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    return float(stats.kstest(v, stats.chi2(dof).cdf).statistic)


def _ensemble_outputs(run, model, report):
    run.csv("ensemble.csv", ["replicate", "seed"] + _theta_header(model, "mle") + ["neg2_log_lambda_true"],
            report.rows())
    ok = np.all(np.isfinite(report.mles), axis=1)
    summary = {"replicates": report.replicates, "failures": [list(f) for f in report.failures],
               "mle_mean": report.mles[ok].mean(axis=0).tolist(),
               "mle_std": report.mles[ok].std(axis=0, ddof=1).tolist() if ok.sum() > 1 else None,
               "neg2_median": float(np.median(report.neg2_at_true[ok])),
               "ks_chi2": _ks_chi2(report.neg2_at_true[ok], model.n_params)}
    run.json("summary.json", summary)
    run.summary = summary


def cmd_ensemble(run, cfg):
    model = build_model(cfg)
    e = cfg["ensemble"]
    theta_true = _theta(e["theta_true"], model, "ensemble.theta_true")
    ref = _theta(cfg["infer"]["theta_ref"], model, "infer.theta_ref")
    grid, _ = build_grid(cfg["infer"]["grid"], model, "infer.grid")
    est = build_estimator(cfg, model)
    try:
        with run.timed("ensemble"):
            report = ensemble_study(model, theta_true, e["n_per_dataset"], e["replicates"], est,
                                    grid, ref, seed=cfg["seed"], workers=cfg["workers"],
                                    max_failures=e["max_failures"])
    except FailureCapExceeded as exc:
        _ensemble_outputs(run, model, exc.partial)
        raise
    _ensemble_outputs(run, model, report)


def _sweep_rows(sweep, k):
    c = sweep.curves[k]
    return [(*t, v, m, s) for t, v, m, s in zip(c.thetas.tolist(), c.values.tolist(),
                                                sweep.gp_means[k].tolist(), sweep.gp_stds[k].tolist())]


def cmd_diagnose(run, cfg):
    from .diagnostics import reference_sweep, weighted_roc_test

    model = build_model(cfg)
    dg = cfg["diagnose"]
    unknown = set(dg["regimes"]) - {"well", "poorly_trained", "poorly_calibrated"}
    if unknown:
        raise ConfigError(f"diagnose.regimes: unknown regimes {sorted(unknown)}")
    refs = [_theta(r, model, "diagnose.references") for r in dg["references"]]
    if len(refs) < 2:
        raise ConfigError("diagnose.references: need at least two reference points")
    grid, _ = build_grid(dg["grid"], model, "diagnose.grid")
    r0 = _theta(dg["roc_theta0"], model, "diagnose.roc_theta0")
    r1 = _theta(dg["roc_theta1"], model, "diagnose.roc_theta1")
    D = load_data(cfg, model)
    th = _theta_header(model)
    disc = dict(cfg["classifier"], hidden=tuple(cfg["classifier"]["hidden"]),
                epochs=dg["discriminator_epochs"], validation_fraction=0.0,
                seed=_seeding.subseed(cfg["seed"], _seeding.STREAM_DIAGNOSTIC, 1))
    disc = ClassifierConfig(**disc)
    roc_seed = _seeding.subseed(cfg["seed"], _seeding.STREAM_DIAGNOSTIC, 2)

    def roc(weights, est=None):
        return weighted_roc_test(model, r0, r1, weights, dg["roc_n"], disc, roc_seed, estimator=est)

    # classifiers: theta1 restricted to the reference points
    if cfg["inputs"]["classifier"] is not None:
        nn = _load_classifier(cfg["inputs"]["classifier"])
    else:
        ts = build_training_set(model, prior_from_dict(cfg["training"]["prior0"]),
                                GridPrior(np.array(refs)), cfg["training"]["n_train"],
                                _seeding.subseed(cfg["seed"], _seeding.STREAM_TRAIN))
        with run.timed("train_nn"):
            nn = train(ts, classifier_config(cfg))
    kw = dict(_calibration_kwargs(cfg), common_random_numbers=dg["sweep_common_random_numbers"])
    estimators = {}
    if "well" in dg["regimes"]:
        estimators["well"] = RatioEstimator(nn, model, **kw)
    if "poorly_trained" in dg["regimes"]:
        if cfg["inputs"]["classifier"] is not None:
            raise ConfigError("diagnose.regimes: poorly_trained needs in-run training "
                              "(leave inputs.classifier null)")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            with run.timed("train_logistic"):
                weak = train(ts, classifier_config(cfg, stream=1, logistic=True))
        estimators["poorly_trained"] = RatioEstimator(weak, model, **kw)
    if "poorly_calibrated" in dg["regimes"]:
        estimators["poorly_calibrated"] = RatioEstimator(
            nn, model, **dict(kw, bins=dg["poor_bins"], n_calibration=dg["poor_n_calibration"]))

    with run.timed("oracle"):
        osweep = reference_sweep(D, grid, refs, OracleRatio(model), fit_gp=False)
        oroc = roc("oracle")
        uroc = roc("none")
    run.csv("oracle_roc.csv", ["fpr", "tpr"], oroc.to_rows())
    run.csv("unweighted_roc.csv", ["fpr", "tpr"], uroc.to_rows())
    verdicts = {"oracle": {"diagnostic": "reweighted_roc", "regime": "oracle",
                           "pass": bool(abs(oroc.auc - 0.5) <= dg["roc_tolerance"]),
                           "statistics": {"auc": oroc.auc, "unweighted_auc": uroc.auc,
                                          "sweep_max_discrepancy": osweep.max_discrepancy()}}}
    failed = []
    for name, est in estimators.items():
        with run.timed(f"sweep_{name}"):
            sw = reference_sweep(D, grid, refs, est, seed=roc_seed)
        inside = [sw.fraction_inside(k, dg["band_width"]) for k in range(len(refs))]
        exits = [1.0 - f > dg["max_outside"] for f in inside]
        for k in range(len(refs)):
            run.csv(f"{name}/sweep_ref{k}.csv", th + ["neg2_log_lambda", "gp_mean", "gp_std"],
                    _sweep_rows(sw, k))
        with run.timed(f"roc_{name}"):
            r = roc("estimator", est)
        run.csv(f"{name}/roc.csv", ["fpr", "tpr"], r.to_rows())
        v_sweep = {"diagnostic": "reference_sweep", "regime": name, "pass": not any(exits),
                   "statistics": {"fraction_inside": inside, "band_mean_std": float(sw.band_std.mean()),
                                  "spread": sw.spread()}}
        v_roc = {"diagnostic": "reweighted_roc", "regime": name,
                 "pass": bool(abs(r.auc - oroc.auc) <= dg["roc_tolerance"]),
                 "statistics": {"auc": r.auc, "oracle_auc": oroc.auc, "unweighted_auc": uroc.auc,
                                "effective_sample_size": r.meta["effective_sample_size"]}}
        run.json(f"{name}/verdict.json", [v_sweep, v_roc])
        verdicts[name] = [v_sweep, v_roc]
        if name in dg["require_pass"] and not (v_sweep["pass"] and v_roc["pass"]):
            failed.append(name)
    run.json("verdicts.json", verdicts)
    run.summary = {"failed_required": failed}
    if failed:
        raise DiagnosticFailed(f"diagnostic verdict failed for regime(s): {', '.join(failed)}")


HANDLERS = {"simulate": cmd_simulate, "train": cmd_train, "calibrate": cmd_calibrate,
            "ratio": cmd_ratio, "infer": cmd_infer, "ensemble": cmd_ensemble,
            "diagnose": cmd_diagnose}


# Entry point ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="lrcal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lrcal {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=HANDLERS[name].__name__[4:])
        s.add_argument("--config", help="JSON config or a run manifest to replay")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--workers", type=int, help="worker threads (ensemble)")
        s.add_argument("--overwrite", action="store_true", help="replace existing outputs")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _prepare(args):
    user = {}
    if args.config:
        if not os.path.exists(args.config):
            raise MissingInput(f"config file not found: {args.config}")
        cmd, user = config_mod.load(args.config)
        if cmd is not None and cmd != args.command:
            raise ConfigError(f"manifest was written by '{cmd}', not '{args.command}'")
    cfg = config_mod.resolve(user)
    if args.seed is not None:
        cfg["seed"] = config_mod.resolve({"seed": args.seed})["seed"]
    if args.workers is not None:
        cfg["workers"] = config_mod.resolve({"workers": args.workers})["workers"]
    if os.path.isdir(args.out) and os.listdir(args.out) and not args.overwrite:
        raise ConfigError(f"output directory {args.out} is not empty (use --overwrite)")
    os.makedirs(args.out, exist_ok=True)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    run = None
    try:
        cfg = _prepare(args)
        run = Run(args.command, cfg, args.out)
        HANDLERS[args.command](run, cfg)
        run.finish()
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingInput, MissingCalibrationError) as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FailureCapExceeded as exc:
        run.finish()
        print(f"numeric failure: {exc} (partial results kept)", file=sys.stderr)
        return EXIT_NUMERIC
    except (FloatingPointError, TrainingDivergedError, GPFitError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DiagnosticFailed as exc:
        run.finish()
        print(f"diagnostic failed: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    except ValueError as exc:
        # remaining validation errors come from user-supplied values
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        logging.captureWarnings(False)


if __name__ == "__main__":
    sys.exit(main())
