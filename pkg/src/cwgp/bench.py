"""Benchmark protocols: regression suites, the T-bill comparison, depth robustness,
SAL approximation sweeps and the closed-form vs numeric-inverse timing run.

Every function returns a JSON-ready dict. Wall-clock figures live under the
top-level ``"timing"`` key only, so two runs with the same seed produce
identical dicts once that key is dropped.
"""
from __future__ import annotations

import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
import scipy

from . import __version__
from .approximation import DEFAULT_INTERVAL, EVAL_POINTS, FIT_POINTS, LATENT_SD, five_tanh_target, run_depth_sweep
from .data import Dataset, SplitSpec, load_registered, read_meta, split, standardize_features
from .errors import CwgpError, DataError
from .metrics import mae, nlpd, rmse
from .kernels import SquaredExponential
from .model import WarpedGP
from .train import TrainConfig, default_template, multi_start_train, optimize_model
from .warpings import BoxCox, CompositeWarping, Shift, SinhArcsinh, parse_code

# training budget for desk-scale regression benchmarks; --paper-scale restores the defaults
DESK_BUDGET = {"max_iters": 200, "rtol": 1e-5}
CWGP_CODES = ("SA", "BC-L", "A-L", "BC-S", "BC-L-SA", "BC-S-SA", "A-L-BC-L", "BC-L-A-L", "A-L-BC-S", "BC-S-A-L")
WGP_CODES = {"WGP1": "T1", "WGP2": "T2", "WGP3": "T3"}
MODEL_CODES = {"GP": "GP", **WGP_CODES, **{c: c for c in CWGP_CODES}}
REGRESSION_SUITES = ("abalone", "ailerons", "creep")
SUITES = REGRESSION_SUITES + ("sunspots", "tbill")
METRICS = ("rmse", "mae", "nlpd", "nll")

CONVENTIONS = {
    "layer_order": "codes list layers left to right in application order y -> x",
    "codes": "SA sinh-arcsinh, BC Box-Cox, A arcsinh, L affine, S shift, T<k> sum of k tanh terms",
    "spectral_mixture": "k(tau) = sum_q w_q exp(-2 pi^2 tau^2 v_q) cos(2 pi mu_q tau); mu_q in cycles per input unit, v_q the spectral variance",
    "point_estimate": "rmse/mae use the predictive median; *_mean columns use the Gauss-Hermite mean",
    "nlpd": "exact change-of-variables predictive density",
    "intervals": "latent sd includes the observation noise",
    "features": "inputs standardised with training statistics; targets never standardised",
}


def environment(seed, **extra):
    return {"seed": seed, "cwgp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), **extra}


def rep_seed(seed, rep):
    return int(np.random.SeedSequence([int(seed), int(rep)]).generate_state(1)[0])


def aggregate(rows, key="model"):
    """Mean and quartiles of every metric over successful rows, per model."""
    out = {}
    for name in dict.fromkeys(r[key] for r in rows):
        ok = [r for r in rows if r[key] == name and r["status"] == "ok"]
        agg = {"n_ok": len(ok), "n_failed": sum(1 for r in rows if r[key] == name) - len(ok)}
        for m in METRICS + ("rmse_mean", "mae_mean", "mse"):
            vals = np.array([r[m] for r in ok if m in r], dtype=float)
            if vals.size:
                q = np.quantile(vals, [0.25, 0.5, 0.75])
                agg[m] = {"mean": float(np.mean(vals)), "q25": float(q[0]), "median": float(q[1]),
                          "q75": float(q[2])}
        out[name] = agg
    return out


def _evaluate(model: WarpedGP, train, test, gh_order, percentile):
    cache = model.fit_cache(train.inputs, train.targets)
    summary = model.predict(cache, test.inputs, percentile, gh_order, test_targets=test.targets)
    return {
        "rmse": rmse(test.targets, summary.median), "mae": mae(test.targets, summary.median),
        "rmse_mean": rmse(test.targets, summary.gh_mean), "mae_mean": mae(test.targets, summary.gh_mean),
        "nlpd": nlpd(summary.log_density), "nrm_iterations": summary.nrm_iterations,
    }


def _failure(row, exc):
    row["status"] = "failed"
    row["error"] = f"{type(exc).__name__}: {exc}"
    return row


# ----------------------------------------------------------------------------
# regression suites


def _prepare(dataset, train_n, seed):
    part = split(dataset, SplitSpec(train_n, 0.5, seed))
    (train, val, test), _ = standardize_features(part.train, part.validation, part.test)
    return train, val, test


def run_regression_rep(dataset, rep, seed, train_n, models, config: TrainConfig, gh_order=20,
                       percentile=0.975, kernel="ard_se", n_components=2):
    rs = rep_seed(seed, rep)
    train, val, test = _prepare(dataset, train_n, rs)
    cfg = replace(config, seed=rs)
    rows, timing, gp = [], [], None
    ordered = sorted(models, key=lambda m: m != "GP")
    for name in ordered:
        row = {"rep": rep, "model": name, "code": MODEL_CODES[name], "status": "ok"}
        t0 = time.perf_counter()
        try:
            template = default_template(kernel, train.dim, parse_code(MODEL_CODES[name]), n_components)
            report = multi_start_train(template, train.inputs, train.targets, cfg,
                                       validation=(val.inputs, val.targets), prelearned=gp)
            t1 = time.perf_counter()
            model = report.best_model
            if name == "GP":
                gp = model
            row["nll"] = report.best_nll
            row["winner"] = report.winner
            row["skipped_starts"] = sum(1 for s in report.starts if s.status != "ok")
            row.update(_evaluate(model, train, test, gh_order, percentile))
            t2 = time.perf_counter()
        except (CwgpError, ArithmeticError, ValueError) as exc:
            _failure(row, exc)
            t1 = t2 = time.perf_counter()
        rows.append(row)
        timing.append({"rep": rep, "model": name, "train_s": t1 - t0, "eval_s": t2 - t1})
    order = {m: i for i, m in enumerate(models)}
    rows.sort(key=lambda r: order[r["model"]])
    timing.sort(key=lambda r: order[r["model"]])
    return rows, timing


def _rep_job(args):
    return run_regression_rep(*args[0], **args[1])


def regression_suite(name, reps=10, seed=0, paper_scale=False, models=None, data_path=None,
                     config=TrainConfig(), gh_order=20, percentile=0.975, jobs=1, dataset=None):
    meta = read_meta(name)
    if dataset is None:
        dataset = load_registered(name, data_path)
    train_n = int(meta["train_n"] if paper_scale else meta["desk_train_n"])
    train_n = min(train_n, dataset.n - 1)
    models = list(models or MODEL_CODES)
    unknown = [m for m in models if m not in MODEL_CODES]
    if unknown:
        raise DataError(f"unknown model name(s) {unknown}; known: {list(MODEL_CODES)}")
    kernel = "spectral_mixture" if name == "sunspots" else "ard_se"
    jobs_args = [((dataset, r, seed, train_n, models, config),
                  {"gh_order": gh_order, "percentile": percentile, "kernel": kernel}) for r in range(reps)]
    if jobs > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_rep_job, jobs_args))
    else:
        results = [_rep_job(a) for a in jobs_args]
    rows = [r for res in results for r in res[0]]
    timing = [t for res in results for t in res[1]]
    return {
        "suite": name,
        "conventions": {**CONVENTIONS, "dataset_notes": meta.get("notes", ""), "source": meta.get("source", "")},
        "environment": environment(seed, reps=reps, train_n=train_n, paper_scale=paper_scale,
                                   fit_fraction=0.5, optimizer=config.optimizer, max_iters=config.max_iters),
        "rows": rows,
        "aggregates": aggregate(rows),
        "timing": {"rows": timing, **_time_aggregates(timing)},
    }


def _time_aggregates(timing):
    out = {}
    for name in dict.fromkeys(t["model"] for t in timing):
        ts = [t for t in timing if t["model"] == name]
        out[name] = {"TimeT": float(np.mean([t["train_s"] for t in ts])),
                     "TimeE": float(np.mean([t["eval_s"] for t in ts]))}
    return {"means": out}


# ----------------------------------------------------------------------------
# treasury bill


def tbill_suite(reps=10, seed=0, n_obs=40, config=TrainConfig(selection="nll"), code="SA-L",
                gh_order=20, percentile=0.975, dataset=None):
    """Plain GP vs a CWGP fitted to ``n_obs`` random quarters, tested on the rest."""
    ds = dataset if dataset is not None else load_registered("tbill")
    rows, timing = [], []
    for rep in range(reps):
        rs = rep_seed(seed, rep)
        idx = np.sort(np.random.default_rng(rs).permutation(ds.n)[:n_obs])
        mask = np.zeros(ds.n, bool)
        mask[idx] = True
        train, test = ds.subset(np.flatnonzero(mask)), ds.subset(np.flatnonzero(~mask))
        gp_model = None
        for name, c in (("GP", "GP"), ("CWGP", code)):
            row = {"rep": rep, "model": name, "code": c, "status": "ok"}
            t0 = time.perf_counter()
            try:
                template = default_template("se", 1, parse_code(c))
                report = multi_start_train(template, train.inputs, train.targets, replace(config, seed=rs),
                                           prelearned=gp_model)
                if name == "GP":
                    gp_model = report.best_model
                t1 = time.perf_counter()
                row["nll"] = report.best_nll
                row["winner"] = report.winner
                row.update(_evaluate(report.best_model, train, test, gh_order, percentile))
                row["mse"] = row["rmse"] ** 2
                t2 = time.perf_counter()
            except (CwgpError, ArithmeticError, ValueError) as exc:
                _failure(row, exc)
                t1 = t2 = time.perf_counter()
            rows.append(row)
            timing.append({"rep": rep, "model": name, "train_s": t1 - t0, "eval_s": t2 - t1})
    wins = 0
    for rep in range(reps):
        gp = next(r for r in rows if r["rep"] == rep and r["model"] == "GP")
        cw = next(r for r in rows if r["rep"] == rep and r["model"] == "CWGP")
        if gp["status"] == cw["status"] == "ok" and cw["nll"] < gp["nll"] and cw["nlpd"] < gp["nlpd"]:
            wins += 1
    return {
        "suite": "tbill",
        "conventions": {**CONVENTIONS, "cwgp_code": code, "selection": "training NLL",
                        "features": "raw quarter index"},
        "environment": environment(seed, reps=reps, n_obs=n_obs, optimizer=config.optimizer),
        "rows": rows,
        "aggregates": aggregate(rows),
        "cwgp_wins": wins,
        "timing": {"rows": timing, **_time_aggregates(timing)},
    }


# ----------------------------------------------------------------------------
# generative recovery


def lognormal_process(seed, n=100, span=10.0, variance=1.0, lengthscale=1.5, noise_var=0.01):
    """``y = exp(f + eps)`` with ``f`` a zero-mean SE-kernel GP draw on uniform inputs in ``[0, span]``."""
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0.0, span, n))[:, None]
    k = SquaredExponential(variance, lengthscale).gram(t, t) + noise_var * np.eye(n)
    x = np.linalg.cholesky(k + 1e-10 * np.eye(n)) @ rng.standard_normal(n)
    return Dataset(t, np.exp(x), ("t",), "y", name=f"lognormal-{seed}")


def generative_recovery(seeds=range(10), n=100, config=TrainConfig(selection="nll")):
    """Plain GP vs a LOG-warped GP on simulated log-normal processes.

    Each dataset is split at random into halves for fitting and validation;
    both models are selected by training NLL and compared on validation NLPD.
    """
    rows = []
    for seed in seeds:
        ds = lognormal_process(seed, n)
        perm = np.random.default_rng(seed + 10_000).permutation(ds.n)
        train, val = ds.subset(np.sort(perm[:n // 2])), ds.subset(np.sort(perm[n // 2:]))
        row = {"seed": int(seed)}
        gp_model = None
        for name, code in (("GP", "GP"), ("CWGP", "LOG")):
            try:
                template = default_template("se", 1, parse_code(code))
                report = multi_start_train(template, train.inputs, train.targets, replace(config, seed=int(seed)),
                                           prelearned=gp_model)
                gp_model = report.best_model if name == "GP" else gp_model
                row[f"{name}_nll"] = report.best_nll
                row[f"{name}_nlpd"] = _evaluate(report.best_model, train, val, 20, 0.975)["nlpd"]
            except (CwgpError, ArithmeticError, ValueError) as exc:
                row[f"{name}_error"] = f"{type(exc).__name__}: {exc}"
                row[f"{name}_nlpd"] = float("inf")
        row["cwgp_wins"] = bool(row["CWGP_nlpd"] < row["GP_nlpd"])
        rows.append(row)
    return {"suite": "recovery", "rows": rows, "cwgp_wins": int(sum(r["cwgp_wins"] for r in rows))}


# ----------------------------------------------------------------------------
# depth robustness


def robustness_unit(variant):
    """Identity-initialised unit appended at each depth step."""
    if variant == "sa":
        return [SinhArcsinh(0.0, 1.0)]
    if variant == "boxcox":
        # y + 1 followed by the lambda = 1 Box-Cox (z - 1) is the identity
        return [Shift(1.0), BoxCox(1.0)]
    raise DataError(f"unknown robustness variant {variant!r}; use 'sa' or 'boxcox'")


def robustness_split(ds, seed, cutoff=1961):
    years = ds.inputs[:, 0]
    early = np.flatnonzero(years <= cutoff)
    late = np.flatnonzero(years > cutoff)
    perm = np.random.default_rng(seed).permutation(early)
    half = early.size // 2
    return ds.subset(np.sort(perm[:half])), ds.subset(np.sort(perm[half:])), ds.subset(late)


def _density_metrics(model, train, test):
    cache = model.fit_cache(train.inputs, train.targets)
    post = model.latent_posterior(cache, test.inputs)
    ld = model.log_density(test.targets, post.mean, np.sqrt(post.var + model.noise_var))
    median, _ = model.warping.invert(post.mean)
    return nlpd(ld), rmse(test.targets, median)


def robustness(variant="sa", max_depth=6, seed=0, config=TrainConfig(selection="nll"), dataset=None,
               n_components=2):
    """Training NLL and held-out NLPD as identity-initialised units are stacked.

    Depth ``d`` is optimised from the depth ``d-1`` optimum with one more
    identity unit, so its NLL can only go down up to optimiser tolerance.
    """
    ds = dataset if dataset is not None else load_registered("sunspots")
    train, recon, forecast = robustness_split(ds, seed)
    unit = robustness_unit(variant)
    template = default_template("spectral_mixture", 1, None, n_components)
    rows, timing = [], []
    model = None
    for depth in range(max_depth + 1):
        row = {"depth": depth, "status": "ok"}
        t0 = time.perf_counter()
        try:
            if depth == 0:
                report = multi_start_train(template, train.inputs, train.targets, replace(config, seed=seed))
                model, nll = report.best_model, report.best_nll
            else:
                warm = model.with_warping(model.warping + CompositeWarping(unit))
                model, res = optimize_model(warm, train.inputs, train.targets, config)
                nll = res.fun
            row["nll_train"] = float(nll)
            row["nlpd_reconstruction"], row["rmse_reconstruction"] = _density_metrics(model, train, recon)
            row["nlpd_forecast"], _ = _density_metrics(model, train, forecast)
            row["warping"] = model.warping.code
        except (CwgpError, ArithmeticError, ValueError) as exc:
            _failure(row, exc)
            rows.append(row)
            timing.append({"depth": depth, "train_s": time.perf_counter() - t0})
            break
        rows.append(row)
        timing.append({"depth": depth, "train_s": time.perf_counter() - t0})
    return {
        "suite": "robustness",
        "conventions": {**CONVENTIONS, "variant": variant, "unit": CompositeWarping(unit).code,
                        "split": f"{train.n} random years up to 1961 for training, {recon.n} reconstruction, "
                                 f"{forecast.n} forecast"},
        "environment": environment(seed, max_depth=max_depth, optimizer=config.optimizer,
                                   kernel=f"spectral_mixture(Q={n_components})"),
        "columns": ["nll_train", "nlpd_reconstruction", "nlpd_forecast", "rmse_reconstruction"],
        "rows": rows,
        "timing": {"rows": timing},
    }


# ----------------------------------------------------------------------------
# SAL approximation sweep


def approx_experiment(max_layers=7, seed=0, target_seed=0, interval=DEFAULT_INTERVAL, fit_points=FIT_POINTS,
                      eval_points=EVAL_POINTS, n_random=1, target=None):
    target = target if target is not None else five_tanh_target(target_seed)
    t0 = time.perf_counter()
    rows = run_depth_sweep(target, max_layers, interval, fit_points, eval_points, n_random, seed)
    return {
        "suite": "approx",
        "conventions": {
            "target": repr(target),
            "layer": "sinh-arcsinh followed by affine",
            "fit": f"least squares on {fit_points} uniform points over {list(interval)}",
            "norms": f"trapezoid rule on {eval_points} uniform points over {list(interval)}",
            "distribution": f"push-forward densities of a latent N(0, {LATENT_SD}^2)",
        },
        "environment": environment(seed, target_seed=target_seed, max_layers=max_layers),
        "columns": ["tran_l1", "tran_l2", "tran_linf", "dist_l1", "dist_l2", "dist_linf"],
        "rows": rows,
        "timing": {"total_s": time.perf_counter() - t0},
    }


# ----------------------------------------------------------------------------
# closed-form vs numeric inverse timing


def timing_run(name="abalone", seed=0, cwgp_code="BC-L-SA", wgp_code="T3", gh_order=20, percentile=0.975,
               repeats=5, config=TrainConfig(), data_path=None, dataset=None):
    """Evaluation wall time of a WGP and a CWGP on the same latent posterior and test set."""
    meta = read_meta(name)
    ds = dataset if dataset is not None else load_registered(name, data_path)
    train, val, test = _prepare(ds, min(int(meta.get("desk_train_n", 300)), ds.n - 1), rep_seed(seed, 0))
    trained = {}
    for label, code in (("GP", "GP"), ("WGP", wgp_code), ("CWGP", cwgp_code)):
        template = default_template("ard_se", train.dim, parse_code(code))
        report = multi_start_train(template, train.inputs, train.targets, replace(config, seed=seed),
                                   validation=(val.inputs, val.targets), prelearned=trained.get("GP"))
        trained[label] = report.best_model
    gp = trained["GP"]
    post = gp.latent_posterior(gp.fit_cache(train.inputs, train.targets), test.inputs)
    out, timing = {}, {}
    for label in ("WGP", "CWGP"):
        model = trained[label].with_latent(gp)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            summary = model.summarize(post.mean, post.var, percentile, gh_order, test.targets)
            times.append(time.perf_counter() - t0)
        out[label] = {"code": model.warping.code, "nrm_iterations": summary.nrm_iterations,
                      "nlpd": nlpd(summary.log_density)}
        timing[label] = {"min_s": min(times), "all_s": times}
    ratio = timing["WGP"]["min_s"] / timing["CWGP"]["min_s"]
    return {
        "suite": "timing",
        "conventions": {**CONVENTIONS, "workload": f"{test.n} test points, median + interval + GH({gh_order}) mean + "
                                                   "log densities on one shared latent posterior"},
        "environment": environment(seed, dataset=name, repeats=repeats),
        "models": out,
        "timing": {**timing, "ratio_wgp_over_cwgp": ratio},
    }


# ----------------------------------------------------------------------------
# text tables


def format_table(columns, rows, floatfmt="{:.4g}"):
    cells = [[str(c) for c in columns]]
    for r in rows:
        cells.append([floatfmt.format(v) if isinstance(v, float) else str(v) for v in r])
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def summary_table(report):
    suite = report["suite"]
    if suite in ("robustness", "approx"):
        cols = ["depth" if suite == "robustness" else "layers"] + report["columns"]
        return format_table(cols, [[r.get(c, r.get("status")) for c in cols] for r in report["rows"]])
    if suite == "timing":
        t = report["timing"]
        return format_table(["model", "code", "eval_s", "nrm_iterations"],
                            [[k, report["models"][k]["code"], t[k]["min_s"], report["models"][k]["nrm_iterations"]]
                             for k in ("WGP", "CWGP")]) + f"\nratio WGP/CWGP = {t['ratio_wgp_over_cwgp']:.3g}"
    means = report.get("timing", {}).get("means", {})
    rows = []
    for name, agg in report["aggregates"].items():
        rows.append([name, means.get(name, {}).get("TimeT", float("nan")),
                     means.get(name, {}).get("TimeE", float("nan"))]
                    + [agg.get(m, {}).get("mean", float("nan")) for m in ("rmse", "mae", "nlpd", "nll")]
                    + [f"{agg['n_ok']}/{agg['n_ok'] + agg['n_failed']}"])
    return format_table(["model", "TimeT", "TimeE", "RMSE", "MAE", "NLPD", "NLL", "ok"], rows)
