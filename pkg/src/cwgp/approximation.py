"""Least-squares replication of a target warping by stacked SAL layers.

A SAL layer is sinh-arcsinh followed by affine. Errors are reported both on
the transformations and on the densities they induce from a fixed latent
Gaussian, as L1, L2 and sup norms on a uniform grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import least_squares
from scipy.stats import norm

from .errors import OptimizerFailure
from .warpings import Affine, CompositeWarping, SinhArcsinh, TanhMix

DEFAULT_INTERVAL = (-10.0, 10.0)
EVAL_POINTS = 4001
FIT_POINTS = 801
LATENT_SD = 3.0
# residual stand-in when a trial parameter vector overflows
_BIG = 1e10


def five_tanh_target(seed=0) -> TanhMix:
    """Fixed-seed five-component sum-of-tanh warping spread over [-8, 8]."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(1.0, 4.0, 5)
    b = rng.uniform(0.5, 3.0, 5)
    c = -np.sort(rng.uniform(-8.0, 8.0, 5))
    return TanhMix(a=a, b=b, c=c)


def sal_stack(depth) -> CompositeWarping:
    layers = []
    for _ in range(depth):
        layers += [SinhArcsinh(0.0, 1.0), Affine(0.0, 1.0)]
    return CompositeWarping(layers)


def norms(diff, grid):
    diff = np.abs(np.asarray(diff, dtype=float))
    return {
        "l1": float(trapezoid(diff, grid)),
        "l2": float(np.sqrt(trapezoid(diff * diff, grid))),
        "linf": float(np.max(diff)),
    }


def pushforward_density(warping, y, latent_sd=LATENT_SD):
    """Density of ``y`` when ``warping(y) ~ N(0, latent_sd^2)``."""
    x, logd = warping.forward_and_log_derivative(np.asarray(y, dtype=float))
    return np.exp(norm.logpdf(x, 0.0, latent_sd) + logd)


def approximation_errors(target, fitted, interval=DEFAULT_INTERVAL, n_grid=EVAL_POINTS, latent_sd=LATENT_SD):
    grid = np.linspace(interval[0], interval[1], n_grid)
    tran = norms(target.forward(grid) - fitted.forward(grid), grid)
    dist = norms(pushforward_density(target, grid, latent_sd) - pushforward_density(fitted, grid, latent_sd), grid)
    return {f"tran_{k}": v for k, v in tran.items()} | {f"dist_{k}": v for k, v in dist.items()}


@dataclass
class ApproxFit:
    warping: CompositeWarping
    sse: float
    starts: list = field(default_factory=list)


def fit_warping_least_squares(model: CompositeWarping, y_grid, x_target, initial=(), n_random=1,
                              seed=0, max_nfev=500) -> ApproxFit:
    """Minimise ``sum (model(y_i) - x_target_i)^2`` over the free parameters.

    Starts are ``model`` itself, every composite in ``initial`` (same
    structure) and ``n_random`` perturbations of ``model``'s parameters.
    """
    y_grid = np.asarray(y_grid, dtype=float)
    x_target = np.asarray(x_target, dtype=float)
    if y_grid.size == 0 or y_grid.size != x_target.size:
        raise OptimizerFailure("need a non-empty grid with one target per point")

    def resid(theta):
        with np.errstate(all="ignore"):
            r = model.with_theta(theta).forward(y_grid) - x_target
        return np.where(np.isfinite(r), r, _BIG)

    rng = np.random.default_rng(seed)
    starts = [model.theta] + [w.theta for w in initial]
    starts += [model.theta + rng.normal(0.0, 0.5, model.param_count) for _ in range(n_random)]
    best, records = None, []
    for theta0 in starts:
        if model.param_count == 0:
            r = resid(theta0)
            records.append({"sse": float(r @ r), "status": "no free parameters"})
            best = (float(r @ r), theta0)
            break
        try:
            out = least_squares(resid, theta0, method="trf", max_nfev=max_nfev, x_scale="jac")
        except (ValueError, ArithmeticError) as exc:
            records.append({"sse": float("inf"), "status": f"failed: {exc}"})
            continue
        sse = float(out.fun @ out.fun)
        records.append({"sse": sse, "status": out.message})
        if np.isfinite(sse) and (best is None or sse < best[0]):
            best = (sse, out.x)
    if best is None:
        raise OptimizerFailure("no least-squares start produced a finite fit")
    return ApproxFit(model.with_theta(best[1]), best[0], records)


def run_depth_sweep(target, max_layers=7, interval=DEFAULT_INTERVAL, fit_points=FIT_POINTS,
                    eval_points=EVAL_POINTS, n_random=1, seed=0, latent_sd=LATENT_SD):
    """Fit 1..max_layers SAL layers; depth d also starts from depth d-1 plus an identity layer."""
    y_grid = np.linspace(interval[0], interval[1], fit_points)
    x_target = target.forward(y_grid)
    rows, previous = [], None
    for depth in range(1, max_layers + 1):
        model = sal_stack(depth)
        initial = []
        if previous is not None:
            initial.append(CompositeWarping(previous.layers + sal_stack(1).layers))
        row = {"layers": depth}
        try:
            fit = fit_warping_least_squares(model, y_grid, x_target, initial, n_random=n_random,
                                            seed=seed + depth)
            previous = fit.warping
            row.update(approximation_errors(target, fit.warping, interval, eval_points, latent_sd))
            row["sse"] = fit.sse
            row["status"] = "ok"
        except OptimizerFailure as exc:
            row["status"] = f"failed: {exc}"
        rows.append(row)
    return rows
