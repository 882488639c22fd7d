"""``cwgp`` command line: fit, predict, sample, benchmark, approx, robustness.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure,
3 data error. Failures print one JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bench
from .data import load_csv, load_inputs, load_registered, read_meta, standardize_features
from .errors import (
    CwgpError, DataError, DomainError, FactorizationFailed, InvalidParameter, NoConvergence, NonFiniteObjective,
    OptimizerFailure, UnsupportedVariant,
)
from .kernels import ConstantMean
from .model import NoiseVariance, WarpedGP
from .serialize import load_model, model_from_dict, save_model
from .train import OPTIMIZERS, TrainConfig, default_template, multi_start_train

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_DATA = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _exit_code(exc):
    if isinstance(exc, (DataError, DomainError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (UsageError, InvalidParameter, UnsupportedVariant)):
        return EXIT_USAGE
    if isinstance(exc, (FactorizationFailed, NoConvergence, NonFiniteObjective, OptimizerFailure,
                        ArithmeticError, CwgpError)):
        return EXIT_NUMERIC
    return EXIT_NUMERIC


def _error_record(exc, code):
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("index", "row", "column"):
        v = getattr(exc, attr, None)
        if v is not None:
            rec["row_index" if attr == "index" else attr] = v
    return rec


def _write_json(path, obj):
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _fmt(v):
    return repr(float(v))


def _write_csv(path, header, columns):
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _config(args, selection, desk=False):
    """Training settings from flags; ``desk`` swaps in the looser benchmark budget for unset flags."""
    budget = bench.DESK_BUDGET if desk and not getattr(args, "paper_scale", False) else {}
    max_iters = args.max_iters if args.max_iters is not None else budget.get("max_iters", 500)
    rtol = args.rtol if args.rtol is not None else budget.get("rtol", 1e-9)
    return TrainConfig(optimizer=args.optimizer, max_iters=max_iters, rtol=rtol,
                       n_random_starts=args.random_starts, seed=args.seed, selection=selection)


# ----------------------------------------------------------------------------
# fit


def _load_training(args):
    if args.dataset:
        ds = load_registered(args.dataset, args.data)
        if args.target and args.target != ds.target_name:
            raise DataError(f"dataset {args.dataset!r} has target {ds.target_name!r}")
        return ds
    if not args.data:
        raise UsageError("fit needs --data PATH or --dataset NAME")
    if not args.target:
        raise UsageError("fit with --data needs --target COLUMN")
    features = args.features.split(",") if args.features else None
    return load_csv(args.data, args.target, feature_columns=features)


def _template(args, dim):
    if args.spec:
        with Path(args.spec).open("rb") as fh:
            doc = tomllib.load(fh)
        return model_from_dict(doc).model
    from .warpings import parse_code

    tpl = default_template(args.kernel, dim, parse_code(args.warping), args.components, args.noise_var)
    return WarpedGP(tpl.kernel, ConstantMean(0.0), warping=tpl.warping, noise=NoiseVariance(args.noise_var))


def cmd_fit(args):
    t0 = time.perf_counter()
    ds = _load_training(args)
    if ds.dropped_rows:
        print(f"dropped {ds.dropped_rows} incomplete row(s)", file=sys.stderr)
    scaler = None
    train = ds
    if args.standardize:
        (train,), scaler = standardize_features(ds)
    template = _template(args, train.dim)
    # surface domain violations of the requested warping with the offending row
    template.warping.forward(train.targets)
    validation = None
    fit_inputs, fit_targets = train.inputs, train.targets
    if args.validation_fraction > 0:
        perm = np.random.default_rng(args.seed).permutation(train.n)
        n_val = int(round(args.validation_fraction * train.n))
        if not 0 < n_val < train.n:
            raise UsageError("validation fraction leaves an empty partition")
        val_idx, fit_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
        validation = (train.inputs[val_idx], train.targets[val_idx])
        fit_inputs, fit_targets = train.inputs[fit_idx], train.targets[fit_idx]
    config = _config(args, "rmse" if validation is not None else "nll")
    report = multi_start_train(template, fit_inputs, fit_targets, config, validation=validation)
    model = report.best_model
    save_model(args.out, model, inputs=fit_inputs, targets=fit_targets, feature_names=ds.feature_names,
               target_name=ds.target_name, scaler=scaler)
    doc = {
        "command": "fit",
        "data": {"n": int(fit_targets.size), "dropped_rows": ds.dropped_rows, "features": list(ds.feature_names),
                 "target": ds.target_name, "standardized": bool(args.standardize)},
        "model": {"warping": model.warping.code, "kernel": model.kernel.variant,
                  "layer_order": bench.CONVENTIONS["layer_order"]},
        "train": report.as_dict(),
        "environment": bench.environment(args.seed),
        "timing": {"total_s": time.perf_counter() - t0, "starts_s": [s.wall_time for s in report.starts]},
    }
    report_path = args.report or str(Path(args.out).with_suffix(".report.json"))
    _write_json(report_path, doc)
    print(f"winner start {report.winner} ({report.starts[report.winner].kind}) by {report.criterion}; "
          f"NLL {report.best_nll:.6g}; warping {model.warping.code}")
    print(f"model -> {args.out}\nreport -> {report_path}")


# ----------------------------------------------------------------------------
# predict / sample


def _model_and_inputs(args):
    mf = load_model(args.model)
    if mf.inputs is None:
        raise DataError(f"model file {args.model} has no [training] section to condition on")
    features = list(mf.feature_names) or None
    if features is None:
        raise DataError("model file does not record feature names")
    inputs, targets = load_inputs(args.data, features, mf.target_name or None)
    if mf.scaler is not None:
        inputs = mf.scaler.transform(inputs)
    return mf, inputs, targets


def cmd_predict(args):
    mf, inputs, targets = _model_and_inputs(args)
    if args.with_density and targets is None:
        raise DataError(f"--with-density needs the target column {mf.target_name!r} in {args.data}")
    model = mf.model
    cache = model.fit_cache(mf.inputs, mf.targets)
    summary = model.predict(cache, inputs, args.percentile, args.gh_order,
                            test_targets=targets if args.with_density else None, noisy=not args.latent_only)
    header = ["median", "gh_mean", "lower", "upper", "latent_sd"]
    cols = [summary.median, summary.gh_mean, summary.lower, summary.upper, summary.latent_sd]
    if args.with_density:
        header.append("log_density")
        cols.append(summary.log_density)
    _write_csv(args.out, header, cols)
    if summary.nrm_iterations:
        print(f"numeric inverse iterations: {summary.nrm_iterations}", file=sys.stderr)


def cmd_sample(args):
    mf, inputs, _ = _model_and_inputs(args)
    model = mf.model
    cache = model.fit_cache(mf.inputs, mf.targets)
    paths = model.sample(cache, inputs, args.n_paths, args.seed, noisy=args.noisy)
    _write_csv(args.out, [f"point_{j}" for j in range(paths.shape[1])], list(paths.T))


# ----------------------------------------------------------------------------
# experiments


def _emit(args, report):
    _write_json(args.out, report)
    print(bench.summary_table(report))
    if args.out:
        print(f"report -> {args.out}")


def cmd_benchmark(args):
    models = args.models.split(",") if args.models else None
    config = _config(args, "rmse", desk=True)
    if args.timing:
        name = "abalone" if args.suite in ("all", "tbill", "sunspots") else args.suite
        report = bench.timing_run(name, args.seed, gh_order=args.gh_order, percentile=args.percentile,
                                  config=config, data_path=args.data)
        return _emit(args, report)
    suites = bench.SUITES if args.suite == "all" else (args.suite,)
    reports = {}
    for name in suites:
        try:
            if name == "tbill":
                rep = bench.tbill_suite(args.reps, args.seed, args.n_obs, _config(args, "nll"),
                                        gh_order=args.gh_order, percentile=args.percentile)
            else:
                rep = bench.regression_suite(name, args.reps, args.seed, args.paper_scale, models,
                                             args.data if args.suite != "all" else None, config,
                                             args.gh_order, args.percentile, args.jobs)
        except DataError as exc:
            if args.suite != "all":
                raise
            rep = {"suite": name, "status": "unavailable", "reason": str(exc)}
        reports[name] = rep
        if "rows" in rep:
            print(f"== {name}")
            print(bench.summary_table(rep))
    out = reports[suites[0]] if len(suites) == 1 else {"suite": "all", "reports": reports}
    _write_json(args.out, out)
    if args.out:
        print(f"report -> {args.out}")


def cmd_approx(args):
    report = bench.approx_experiment(args.max_layers, args.seed, args.target_seed, tuple(args.interval),
                                     args.fit_points, args.eval_points, args.random_starts)
    _emit(args, report)


def cmd_robustness(args):
    ds = load_registered("sunspots", args.data)
    report = bench.robustness(args.variant, args.max_depth, args.seed, _config(args, "nll"), dataset=ds,
                              n_components=args.components)
    _emit(args, report)


# ----------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="cwgp", description="Compositionally-warped GP regression and benchmarks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output path (stdout when omitted, where applicable)")

    def training(sp):
        sp.add_argument("--optimizer", choices=OPTIMIZERS, default="bfgs")
        sp.add_argument("--max-iters", type=int, default=None,
                        help="per-start iteration cap (default 500; benchmark desk scale 200)")
        sp.add_argument("--rtol", type=float, default=None,
                        help="relative NLL improvement stop (default 1e-9; benchmark desk scale 1e-5)")
        sp.add_argument("--random-starts", type=int, default=3)

    def prediction(sp):
        sp.add_argument("--gh-order", type=int, default=20)
        sp.add_argument("--percentile", type=float, default=0.975)

    f = sub.add_parser("fit", help="train a model with the six-start protocol")
    f.add_argument("--data", help="CSV with a header row")
    f.add_argument("--dataset", help="bundled dataset name (with --data: same schema from that file)")
    f.add_argument("--target", help="target column")
    f.add_argument("--features", help="comma-separated feature columns (default: all others)")
    f.add_argument("--kernel", choices=("se", "ard_se", "spectral_mixture"), default="ard_se")
    f.add_argument("--components", type=int, default=2, help="spectral mixture components")
    f.add_argument("--warping", default="GP", help="layer code in application order, e.g. BC-L-SA, T3, GP")
    f.add_argument("--spec", help="TOML model spec ([mean], [kernel], [noise], [[warping]] with fixed flags)")
    f.add_argument("--noise-var", type=float, default=0.1, help="initial noise variance; 0 fixes it at zero")
    f.add_argument("--validation-fraction", type=float, default=0.0,
                   help="hold-out share for selection by validation RMSE (0: select by NLL)")
    f.add_argument("--no-standardize", dest="standardize", action="store_false")
    f.add_argument("--report", help="training report path (default: next to --out)")
    training(f)
    common(f)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="median, GH mean and percentile interval per row")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--with-density", action="store_true", help="add log predictive density (needs targets)")
    pr.add_argument("--latent-only", action="store_true", help="intervals without observation noise")
    prediction(pr)
    common(pr, seed=False)
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("sample", help="joint posterior paths at the given inputs")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--n-paths", type=int, default=10)
    s.add_argument("--noisy", action="store_true", help="add observation noise to the latent paths")
    common(s)
    s.set_defaults(func=cmd_sample)

    b = sub.add_parser("benchmark", help="run a benchmark suite")
    b.add_argument("suite", choices=bench.SUITES + ("all",))
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--paper-scale", action="store_true", help="full training sizes instead of desk scale")
    b.add_argument("--timing", action="store_true",
                   help="serial WGP vs CWGP evaluation timing on one shared latent posterior")
    b.add_argument("--models", help="comma-separated subset of " + ",".join(bench.MODEL_CODES))
    b.add_argument("--data", help="CSV for datasets that are not bundled")
    b.add_argument("--jobs", type=int, default=1, help="parallel repetitions (ignored with --timing)")
    b.add_argument("--n-obs", type=int, default=40, help="tbill training observations")
    training(b)
    prediction(b)
    common(b)
    b.set_defaults(func=cmd_benchmark)

    a = sub.add_parser("approx", help="SAL-layer replication of a five-tanh warping")
    a.add_argument("--max-layers", type=int, default=7)
    a.add_argument("--target-seed", type=int, default=0)
    a.add_argument("--interval", type=float, nargs=2, default=[-10.0, 10.0])
    a.add_argument("--fit-points", type=int, default=801)
    a.add_argument("--eval-points", type=int, default=4001)
    a.add_argument("--random-starts", type=int, default=1)
    common(a)
    a.set_defaults(func=cmd_approx)

    r = sub.add_parser("robustness", help="NLL/NLPD against warping depth on sunspots")
    r.add_argument("--variant", choices=("sa", "boxcox"), default="sa")
    r.add_argument("--max-depth", type=int, default=6)
    r.add_argument("--components", type=int, default=2)
    r.add_argument("--data", help="sunspots-schema CSV (default: bundled)")
    training(r)
    common(r)
    r.set_defaults(func=cmd_robustness)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) and getattr(args, "timing", False):
            args.jobs = 1
        with np.errstate(all="ignore"):
            args.func(args)
    except SystemExit as exc:
        # --help and friends
        return int(exc.code or 0)
    except (UsageError, CwgpError, OSError, ArithmeticError) as exc:
        code = _exit_code(exc)
        print(json.dumps(_error_record(exc, code)), file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
