"""Six-start hyperparameter training with validation-based model selection.

Starts, in index order: the template's own (data-independent) values, a
data-derived start, a start prelearned from a plain GP, then
``n_random_starts`` perturbations of the data-derived start.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lombscargle

from .errors import AllStartsFailed, CwgpError, InvalidParameter, NonFiniteObjective
from .kernels import ARDSquaredExponential, ConstantMean, SpectralMixture, SquaredExponential, _as_inputs
from .metrics import rmse
from .model import NoiseVariance, WarpedGP
from .optimize import bfgs_minimize, powell_minimize
from .warpings import reset_to_near_identity

OPTIMIZERS = ("bfgs", "powell", "both")
START_KINDS = ("default", "data", "prelearned")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "bfgs"
    max_iters: int = 500
    grad_step: float = 1e-6
    gtol: float = 1e-6
    rtol: float = 1e-9
    n_random_starts: int = 3
    random_scale: float = 2.0
    seed: int = 0
    selection: str = "rmse"

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise InvalidParameter(f"optimizer must be one of {OPTIMIZERS}")
        if self.grad_step <= 0 or self.gtol <= 0 or self.rtol <= 0:
            raise InvalidParameter("grad_step and tolerances must be positive")
        if self.max_iters < 1 or self.n_random_starts < 0:
            raise InvalidParameter("max_iters must be >= 1 and n_random_starts >= 0")
        if self.selection not in ("rmse", "nll"):
            raise InvalidParameter("selection must be 'rmse' or 'nll'")


@dataclass
class StartRecord:
    index: int
    kind: str
    status: str
    reason: str = ""
    initial_nll: float = float("nan")
    final_nll: float = float("nan")
    val_rmse: float = float("nan")
    iterations: int = 0
    evaluations: int = 0
    converged: bool = False
    wall_time: float = 0.0

    def as_dict(self, timing=False):
        d = {k: v for k, v in self.__dict__.items() if k != "wall_time"}
        if timing:
            d["wall_time"] = self.wall_time
        return d


@dataclass
class TrainReport:
    best_model: WarpedGP
    best_params: np.ndarray
    best_nll: float
    starts: list
    winner: int
    criterion: str
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def as_dict(self, timing=False):
        d = {
            "best_params": [float(v) for v in self.best_params],
            "best_nll": float(self.best_nll),
            "selection": {"winner": self.winner, "criterion": self.criterion},
            "starts": [s.as_dict(timing) for s in self.starts],
            "warping": self.best_model.warping.code,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


# ----------------------------------------------------------------------------
# objective and single-start optimisation


def nll_objective(model: WarpedGP, inputs, targets):
    inputs = _as_inputs(inputs)
    targets = np.asarray(targets, dtype=float).ravel()

    def objective(theta):
        try:
            with np.errstate(all="ignore"):
                v = model.with_theta(theta).nll(inputs, targets)
        except (CwgpError, ArithmeticError, ValueError):
            return np.inf
        return v if np.isfinite(v) else np.inf

    return objective


def optimize_model(model: WarpedGP, inputs, targets, config: TrainConfig):
    """Minimise the NLL from ``model``'s parameters; returns ``(model, OptimizeResult)``."""
    objective = nll_objective(model, inputs, targets)
    theta0 = model.theta
    if config.optimizer in ("bfgs", "both"):
        res = bfgs_minimize(objective, theta0, max_iters=config.max_iters, gtol=config.gtol,
                            rtol=config.rtol, grad_step=config.grad_step)
        if config.optimizer == "both":
            polished = powell_minimize(objective, res.x, max_iters=config.max_iters)
            polished.n_iter += res.n_iter
            polished.n_eval += res.n_eval
            polished.trace = res.trace + polished.trace[1:]
            res = polished
    else:
        res = powell_minimize(objective, theta0, max_iters=config.max_iters)
    return model.with_theta(res.x), res


# ----------------------------------------------------------------------------
# starting points


def spectral_peaks(t, z, n_peaks, n_freq=2000):
    """Frequencies (cycles per unit) of the largest Lomb-Scargle periodogram peaks."""
    t = np.asarray(t, dtype=float).ravel()
    span = float(np.ptp(t)) or 1.0
    dt = np.diff(np.sort(np.unique(t)))
    nyq = 0.5 / float(np.median(dt)) if dt.size else 1.0
    freqs = np.linspace(1.0 / span, nyq, n_freq)
    power = lombscargle(t, np.asarray(z, dtype=float) - np.mean(z), 2.0 * np.pi * freqs)
    peaks = np.flatnonzero((power[1:-1] > power[:-2]) & (power[1:-1] >= power[2:])) + 1
    peaks = peaks[np.argsort(power[peaks])[::-1]]
    chosen = list(freqs[peaks[:n_peaks]])
    while len(chosen) < n_peaks:
        chosen.append(freqs[0] * (len(chosen) + 1))
    return np.asarray(chosen), span


def _rebuild(obj, values):
    """Same class and fixed flags; only free parameters take the new values."""
    merged = dict(obj.params)
    for k, v in values.items():
        if k not in obj.fixed:
            merged[k] = v
    return type(obj)(**merged, fixed=obj.fixed)


def data_kernel(kernel, inputs, latents):
    inputs = _as_inputs(inputs)
    var = float(np.var(latents)) or 1.0
    sd = inputs.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    if isinstance(kernel, SquaredExponential):
        return _rebuild(kernel, {"variance": var, "lengthscale": float(np.mean(sd))})
    if isinstance(kernel, ARDSquaredExponential):
        return _rebuild(kernel, {"variance": var, "lengthscales": sd})
    if isinstance(kernel, SpectralMixture):
        q = kernel.n_components
        freqs, span = spectral_peaks(inputs[:, 0], latents, q)
        return _rebuild(kernel, {"weights": np.full(q, var / q), "frequencies": freqs,
                                 "bandwidths": np.full(q, (1.0 / span) ** 2)})
    raise InvalidParameter(f"no data-derived start for kernel {type(kernel).__name__}")


def data_derived_start(template: WarpedGP, inputs, targets) -> WarpedGP:
    """Warping near the identity on the data; latent moments matched to ``phi_init(y)``."""
    warping = reset_to_near_identity(template.warping, targets)
    z = np.asarray(warping.forward(targets), dtype=float)
    var = float(np.var(z)) or 1.0
    kernel = data_kernel(template.kernel, inputs, z)
    mean = _rebuild(template.mean, {"value": float(np.mean(z))})
    noise = _rebuild(template.noise, {"variance": 0.1 * var})
    return WarpedGP(kernel, mean, warping=warping, noise=noise)


def prelearned_start(template: WarpedGP, gp: WarpedGP, targets) -> WarpedGP:
    """Latent hyperparameters of a plain GP trained on ``targets``, moved to ``phi_init(y)`` units."""
    warping = reset_to_near_identity(template.warping, targets)
    y = np.asarray(targets, dtype=float)
    z = np.asarray(warping.forward(y), dtype=float)
    ratio = (float(np.var(z)) or 1.0) / (float(np.var(y)) or 1.0)
    # exact when phi_init is affine on the data: m -> mean(z) + a (m - mean(y))
    slope = float(np.sqrt(ratio))
    p = gp.kernel.params
    if isinstance(gp.kernel, SpectralMixture):
        p["weights"] = p["weights"] * ratio
    else:
        p["variance"] = p["variance"] * ratio
    kernel = _rebuild(template.kernel, p) if type(gp.kernel) is type(template.kernel) else template.kernel
    mean = _rebuild(template.mean, {"value": float(np.mean(z)) + slope * (gp.mean.value("value") - float(np.mean(y)))})
    noise = _rebuild(template.noise, {"variance": max(gp.noise_var * ratio, 1e-12)})
    return WarpedGP(kernel, mean, warping=warping, noise=noise)


def random_start(base: WarpedGP, rng, scale) -> WarpedGP:
    theta = base.theta
    return base.with_theta(theta + rng.uniform(-scale, scale, size=theta.size))


def plain_template(template: WarpedGP) -> WarpedGP:
    return WarpedGP(template.kernel, template.mean, warping=None, noise=template.noise)


# ----------------------------------------------------------------------------
# protocol


def validation_rmse(model: WarpedGP, inputs, targets, val_inputs, val_targets):
    cache = model.fit_cache(inputs, targets)
    post = model.latent_posterior(cache, val_inputs)
    median, _ = model.warping.invert(post.mean)
    return rmse(val_targets, median)


def _run_start(index, kind, start, inputs, targets, validation, config):
    rec = StartRecord(index, kind, "ok")
    t0 = time.perf_counter()
    model = None
    try:
        if isinstance(start, Exception):
            raise start
        rec.initial_nll = start.nll(inputs, targets)
        if not np.isfinite(rec.initial_nll):
            raise NonFiniteObjective("NLL is not finite at the start")
        model, res = optimize_model(start, inputs, targets, config)
        rec.final_nll = float(res.fun)
        rec.iterations, rec.evaluations, rec.converged = res.n_iter, res.n_eval, res.converged
        if validation is not None:
            try:
                with np.errstate(all="ignore"):
                    rec.val_rmse = validation_rmse(model, inputs, targets, *validation)
            except (CwgpError, ArithmeticError, ValueError) as exc:
                rec.val_rmse = float("inf")
                rec.reason = f"validation failed: {exc}"
    except (CwgpError, ArithmeticError, ValueError) as exc:
        rec.status = "skipped"
        rec.reason = f"{type(exc).__name__}: {exc}"
        model = None
    rec.wall_time = time.perf_counter() - t0
    return rec, model


def build_starts(template, inputs, targets, config, prelearned=None, fit_gp=None):
    """Initial models in protocol order; a failed construction is returned as the exception."""
    starts = [("default", template)]
    try:
        data = data_derived_start(template, inputs, targets)
    except (CwgpError, ArithmeticError, ValueError) as exc:
        data = exc
    starts.append(("data", data))
    if prelearned is None and fit_gp is not None and not isinstance(data, Exception):
        prelearned = fit_gp()
    if prelearned is not None:
        try:
            pre = prelearned_start(template, prelearned, targets)
        except (CwgpError, ArithmeticError, ValueError) as exc:
            pre = exc
    else:
        pre = data if isinstance(data, Exception) else InvalidParameter("no prelearned GP available")
    starts.append(("prelearned", pre))
    rng = np.random.default_rng(config.seed)
    for _ in range(config.n_random_starts):
        if isinstance(data, Exception):
            starts.append(("random", data))
            continue
        starts.append(("random", random_start(data, rng, config.random_scale)))
    return starts


def multi_start_train(template: WarpedGP, inputs, targets, config: TrainConfig = TrainConfig(),
                      validation=None, prelearned: WarpedGP | None = None, starts=None) -> TrainReport:
    """Run every start, then select by validation RMSE of the median (or by NLL).

    ``validation`` is ``(val_inputs, val_targets)``; without it, or with
    ``config.selection == "nll"``, the lowest training NLL wins. Ties go to the
    lower NLL, then to the lower start index. ``prelearned`` is a trained plain
    GP; when omitted one is trained from the data-derived start. ``starts``
    overrides the protocol with an explicit list of initial models.
    """
    t0 = time.perf_counter()
    inputs = _as_inputs(inputs)
    targets = np.asarray(targets, dtype=float).ravel()
    if validation is not None:
        validation = (_as_inputs(validation[0]), np.asarray(validation[1], dtype=float).ravel())
    criterion = "rmse" if (validation is not None and config.selection == "rmse") else "nll"

    records, models = [], []
    if starts is not None:
        plan = [("given", s) for s in starts]
    else:
        gp_cache = {}

        def fit_gp():
            # a plain template's data-derived optimum doubles as its prelearned start
            gp_start = data_derived_start(plain_template(template), inputs, targets)
            gp_cache["model"], _ = optimize_model(gp_start, inputs, targets, config)
            return gp_cache["model"]

        plan = build_starts(template, inputs, targets, config, prelearned, fit_gp)
    for i, (kind, start) in enumerate(plan):
        rec, model = _run_start(i, kind, start, inputs, targets, validation, config)
        records.append(rec)
        models.append(model)

    ok = [r for r in records if r.status == "ok"]
    if not ok:
        raise AllStartsFailed("every start failed: " + "; ".join(r.reason for r in records))

    def key(r):
        primary = r.val_rmse if criterion == "rmse" else r.final_nll
        primary = primary if np.isfinite(primary) else np.inf
        return (primary, r.final_nll, r.index)

    best = min(ok, key=key)
    model = models[best.index]
    return TrainReport(model, model.theta, best.final_nll, records, best.index, criterion,
                       wall_time=time.perf_counter() - t0)


def default_template(kernel="ard_se", dim=1, warping=None, n_components=2, noise_var=0.1):
    """Data-independent template: unit variances and lengthscales, zero mean."""
    if kernel == "se":
        k = SquaredExponential(1.0, 1.0)
    elif kernel == "ard_se":
        k = ARDSquaredExponential(1.0, np.ones(dim))
    elif kernel == "spectral_mixture":
        k = SpectralMixture(np.full(n_components, 1.0 / n_components),
                            np.arange(1, n_components + 1, dtype=float) * 0.1, np.full(n_components, 0.01))
    else:
        raise InvalidParameter(f"unknown kernel {kernel!r}")
    return WarpedGP(k, ConstantMean(0.0), warping=warping, noise=NoiseVariance(noise_var))
