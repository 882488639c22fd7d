"""Warped GP: a latent GP observed through an invertible warping ``x = phi(y)``.

With an empty warping the model is an ordinary GP regressor.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import DimensionMismatch, InvalidParameter, UnsupportedVariant
from .kernels import ConstantMean, Kernel, _as_inputs
from .linalg import LOG_2PI, CholeskyFactor, cholesky_with_jitter, gp_condition
from .params import Parameterized
from .quadrature import DEFAULT_ORDER, combine, gh_rule, latent_points
from .warpings import Arcsinh, BoxCox, CompositeWarping, Log, as_composite


class NoiseVariance(Parameterized):
    transforms = {"variance": "log"}

    def __init__(self, variance=0.1, fixed=()):
        if float(variance) == 0.0:
            fixed = ("variance",)
        super().__init__({"variance": variance}, fixed)

    def _validate(self):
        if self._values["variance"][0] < 0:
            raise InvalidParameter("noise variance must be non-negative")


@dataclass(frozen=True)
class FittedCache:
    chol: CholeskyFactor
    alpha: np.ndarray
    train_inputs: np.ndarray
    train_targets: np.ndarray
    train_latents: np.ndarray
    log_derivatives: np.ndarray

    @property
    def n(self):
        return self.train_latents.size


@dataclass(frozen=True)
class PredictionSummary:
    median: np.ndarray
    gh_mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    latent_mean: np.ndarray
    latent_sd: np.ndarray
    percentile: float = 0.975
    log_density: np.ndarray | None = None
    nrm_iterations: int = 0

    def point(self, kind="median"):
        return self.gh_mean if kind == "mean" else self.median


@dataclass(frozen=True)
class ShapeDiagnostics:
    mode: float | None = None
    mean: float | None = None
    variance: float | None = None
    notes: str = field(default="")


class WarpedGP:
    """Latent GP ``x ~ GP(mean, kernel)`` with noisy observations warped by ``phi``.

    Parameters are exposed as one unconstrained vector ``theta`` ordered as
    ``(mean, kernel, noise, warping)``; ``theta_x`` is the latent part.
    """

    def __init__(self, kernel: Kernel, mean=None, noise_var=0.1, warping=None, noise=None):
        self.kernel = kernel
        self.mean = mean if mean is not None else ConstantMean(0.0)
        self.noise = noise if noise is not None else NoiseVariance(noise_var)
        self.warping = as_composite(warping)

    def __repr__(self):
        return (f"WarpedGP(kernel={type(self.kernel).__name__}{self.kernel.params}, "
                f"mean={self.mean.value('value'):.4g}, noise={self.noise_var:.4g}, "
                f"warping={self.warping.code})")

    @property
    def noise_var(self) -> float:
        return self.noise.value("variance")

    @property
    def is_plain_gp(self):
        return len(self.warping) == 0

    # -- parameter views ------------------------------------------------------

    @property
    def n_latent_params(self):
        return self.mean.n_params + self.kernel.n_params + self.noise.n_params

    @property
    def theta_x(self):
        return np.concatenate([self.mean.theta, self.kernel.theta, self.noise.theta])

    @property
    def theta_phi(self):
        return self.warping.theta

    @property
    def theta(self):
        return np.concatenate([self.theta_x, self.theta_phi])

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_latent_params + self.warping.param_count,):
            raise InvalidParameter(f"theta has shape {theta.shape}, model expects "
                                   f"{self.n_latent_params + self.warping.param_count}")
        i = 0
        parts = []
        for obj in (self.mean, self.kernel, self.noise, self.warping):
            k = obj.n_params
            parts.append(obj.with_theta(theta[i:i + k]))
            i += k
        mean, kernel, noise, warping = parts
        return WarpedGP(kernel, mean, warping=warping, noise=noise)

    def with_theta_x(self, theta_x):
        return self.with_theta(np.concatenate([theta_x, self.theta_phi]))

    def with_warping(self, warping):
        return WarpedGP(self.kernel, self.mean, warping=warping, noise=self.noise)

    def with_latent(self, other: "WarpedGP"):
        """This warping with another model's mean, kernel and noise."""
        return WarpedGP(other.kernel, other.mean, warping=self.warping, noise=other.noise)

    # -- training objective ---------------------------------------------------

    def _train_factor(self, inputs):
        k = self.kernel.gram(inputs, inputs)
        k[np.diag_indices_from(k)] += self.noise_var
        return cholesky_with_jitter(k)

    def fit_cache(self, inputs, targets) -> FittedCache:
        targets = np.asarray(targets, dtype=float).ravel()
        if targets.size == 0:
            d = 1 if inputs is None else _as_inputs(inputs).shape[1] if np.size(inputs) else 1
            return FittedCache(cholesky_with_jitter(np.zeros((0, 0))), np.zeros(0),
                               np.zeros((0, d)), targets, targets.copy(), targets.copy())
        inputs = _as_inputs(inputs)
        if inputs.shape[0] != targets.size:
            raise DimensionMismatch(f"{inputs.shape[0]} input rows for {targets.size} targets")
        latents, logd = self.warping.forward_and_log_derivative(targets)
        chol = self._train_factor(inputs)
        alpha = chol.solve(latents - self.mean(inputs))
        return FittedCache(chol, alpha, inputs, targets, np.asarray(latents), np.asarray(logd))

    def nll_from_cache(self, cache: FittedCache) -> float:
        n = cache.n
        if n == 0:
            return 0.0
        resid = cache.train_latents - self.mean(cache.train_inputs)
        fit = float(resid @ cache.alpha)
        return float(0.5 * n * LOG_2PI + 0.5 * fit + 0.5 * cache.chol.log_det
                     - np.sum(cache.log_derivatives))

    def nll(self, inputs, targets) -> float:
        """Negative log marginal likelihood of the observations, including ``-sum log phi'(y)``."""
        inputs = _as_inputs(inputs)
        targets = np.asarray(targets, dtype=float).ravel()
        if inputs.shape[0] != targets.size:
            raise DimensionMismatch(f"{inputs.shape[0]} input rows for {targets.size} targets")
        latents, logd = self.warping.forward_and_log_derivative(targets)
        chol = self._train_factor(inputs)
        z = chol.half_solve(latents - self.mean(inputs))
        n = targets.size
        return float(0.5 * n * LOG_2PI + 0.5 * z @ z + 0.5 * chol.log_det - np.sum(logd))

    # -- prediction -----------------------------------------------------------

    def latent_posterior(self, cache: FittedCache | None, test_inputs, full_cov=False):
        test_inputs = _as_inputs(test_inputs)
        if cache is None or cache.n == 0:
            return gp_condition(None, np.zeros(0), test_inputs, self.kernel, self.mean,
                                self.noise_var, full_cov=full_cov)
        return gp_condition(cache.train_inputs, cache.train_latents, test_inputs, self.kernel,
                            self.mean, self.noise_var, full_cov=full_cov, chol=cache.chol)

    def predict(self, cache, test_inputs, percentile=0.975, gh_order=DEFAULT_ORDER,
                test_targets=None, noisy=True) -> PredictionSummary:
        """Median, Gauss-Hermite mean, percentile interval and optional log densities.

        ``noisy`` adds the observation noise to the latent variance used for the
        interval; the mean and densities always refer to noisy observations.
        """
        post = self.latent_posterior(cache, test_inputs)
        return self.summarize(post.mean, post.var, percentile, gh_order, test_targets, noisy)

    def summarize(self, latent_mean, latent_var, percentile=0.975, gh_order=DEFAULT_ORDER,
                  test_targets=None, noisy=True) -> PredictionSummary:
        """Warped-space summaries of Gaussian latent marginals ``N(latent_mean, latent_var)``."""
        if not 0.5 <= percentile < 1.0:
            raise InvalidParameter("percentile must lie in [0.5, 1)")
        m = np.asarray(latent_mean, dtype=float).ravel()
        var_f = np.maximum(np.asarray(latent_var, dtype=float).ravel(), 0.0)
        obs_sd = np.sqrt(var_f + self.noise_var)
        sd = obs_sd if noisy else np.sqrt(var_f)
        z = norm.ppf(percentile)
        rule = gh_rule(gh_order)
        pts = latent_points(m, obs_sd, rule)
        n, k = m.size, rule.order
        stacked = np.concatenate([m, m - z * sd, m + z * sd, pts.ravel()])
        ys, iters = self.warping.invert(stacked)
        median, lo, hi = ys[:n], ys[n:2 * n], ys[2 * n:3 * n]
        gh_mean = combine(ys[3 * n:].reshape(n, k), rule)
        gh_mean = np.where(obs_sd == 0, median, gh_mean)
        log_density = None
        if test_targets is not None:
            log_density = self.log_density(test_targets, m, obs_sd)
        return PredictionSummary(
            median=median, gh_mean=gh_mean, lower=np.minimum(lo, hi), upper=np.maximum(lo, hi),
            latent_mean=m, latent_sd=sd, percentile=percentile, log_density=log_density,
            nrm_iterations=int(np.sum(iters)),
        )

    def log_density(self, targets, latent_mean, latent_sd):
        """``log phi'(y) + log N(phi(y) | latent_mean, latent_sd^2)`` per point."""
        y = np.asarray(targets, dtype=float).ravel()
        x, logd = self.warping.forward_and_log_derivative(y)
        with np.errstate(divide="ignore"):
            return norm.logpdf(x, latent_mean, latent_sd) + logd

    def sample(self, cache, test_inputs, n_paths, seed, noisy=False):
        """Joint posterior (or prior) paths mapped through ``phi^{-1}``; shape ``(n_paths, n_test)``."""
        post = self.latent_posterior(cache, test_inputs, full_cov=True)
        cov = post.cov + (self.noise_var * np.eye(post.mean.size) if noisy else 0.0)
        factor = cholesky_with_jitter(0.5 * (cov + cov.T))
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((int(n_paths), post.mean.size))
        latent = post.mean + z @ factor.lower.T
        y, _ = self.warping.invert(latent)
        return np.asarray(y)


def nll(model: WarpedGP, inputs, targets) -> float:
    return model.nll(inputs, targets)


def fit_cache(model: WarpedGP, inputs, targets) -> FittedCache:
    return model.fit_cache(inputs, targets)


def lognormal_moment(n, m_x, s_x):
    """``E[y^n]`` for ``y = exp(x)``, ``x ~ N(m_x, s_x^2)``."""
    return float(np.exp(n * m_x + 0.5 * n * n * s_x * s_x))


def boxcox_mode(lam, m_x, s_x):
    """Mode of ``y`` when ``BoxCox(lam)(y) ~ N(m_x, s_x^2)`` (positive branch)."""
    if lam == 0:
        return float(np.exp(m_x - s_x * s_x))
    base = 1.0 + lam * m_x
    disc = base * base + 4.0 * s_x * s_x * lam * (lam - 1.0)
    if disc < 0:
        raise InvalidParameter("Box-Cox mode formula has no real solution for these moments")
    return float((0.5 * (base + np.sqrt(disc))) ** (1.0 / lam))


def johnson_su_moments(layer: Arcsinh, m_x=0.0, s_x=1.0):
    """Mean and variance of ``y = c + d sinh((x - a) / b)`` for ``x ~ N(m_x, s_x^2)``.

    Substituting ``x = m_x + s_x z`` gives a standard Johnson SU variable with
    ``a' = (a - m_x) / s_x`` and ``b' = b / s_x``.
    """
    p = layer.params
    if s_x <= 0:
        raise InvalidParameter("latent standard deviation must be positive")
    a = (p["a"] - m_x) / s_x
    b = p["b"] / s_x
    w = np.exp(b**-2)
    mean = p["c"] - p["d"] * np.sqrt(w) * np.sinh(a / b)
    var = 0.5 * p["d"] ** 2 * (w - 1.0) * (w * np.cosh(2.0 * a / b) + 1.0)
    return float(mean), float(var)


def shape_diagnostics(warping, m_x, s_x) -> ShapeDiagnostics:
    """Closed-form mode/mean/variance of the push-forward of ``N(m_x, s_x^2)`` where known."""
    layers = warping.layers if isinstance(warping, CompositeWarping) else (warping,)
    if len(layers) != 1:
        raise UnsupportedVariant("shape diagnostics need a single elementary warping")
    layer = layers[0]
    if isinstance(layer, Log) or (isinstance(layer, BoxCox) and layer.value("lam") == 0.0):
        s2 = s_x * s_x
        return ShapeDiagnostics(
            mode=float(np.exp(m_x - s2)),
            mean=lognormal_moment(1, m_x, s_x),
            variance=float(np.expm1(s2) * np.exp(2.0 * m_x + s2)),
            notes="lognormal",
        )
    if isinstance(layer, BoxCox):
        return ShapeDiagnostics(mode=boxcox_mode(layer.value("lam"), m_x, s_x), notes="box-cox")
    if isinstance(layer, Arcsinh):
        mean, var = johnson_su_moments(layer, m_x, s_x)
        return ShapeDiagnostics(mean=mean, variance=var, notes="johnson-su")
    raise UnsupportedVariant(f"no closed-form shape diagnostics for {layer.variant!r}")
