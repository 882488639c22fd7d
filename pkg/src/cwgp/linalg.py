"""Dense Gaussian machinery: jittered Cholesky, MVN log-density, GP conditioning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, FactorizationFailed

LOG_2PI = np.log(2.0 * np.pi)

# multiples of the mean diagonal tried in order
JITTER_SCHEDULE = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray
    log_det: float
    jitter_used: float = 0.0

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def solve(self, b):
        """Return ``A^{-1} b`` for the factored matrix ``A``."""
        if self.n == 0:
            return np.zeros_like(np.asarray(b, dtype=float))
        return cho_solve((self.lower, True), b, check_finite=False)

    def half_solve(self, b):
        """Return ``L^{-1} b``."""
        if self.n == 0:
            return np.zeros_like(np.asarray(b, dtype=float))
        return solve_triangular(self.lower, b, lower=True, check_finite=False)


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray | None = None

    @property
    def sd(self):
        return np.sqrt(self.var)


def cholesky_with_jitter(mat, schedule=JITTER_SCHEDULE) -> CholeskyFactor:
    """Factor a symmetric PSD matrix, adding the smallest diagonal jitter that works.

    Jitter levels are relative to the mean of the diagonal. Raises
    :class:`FactorizationFailed` when every level fails.
    """
    a = np.asarray(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        return CholeskyFactor(np.zeros((0, 0)), 0.0, 0.0)
    if not np.all(np.isfinite(a)):
        raise FactorizationFailed("matrix has non-finite entries")
    scale = np.max(np.abs(a))
    if scale > 0 and np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise DimensionMismatch("matrix is not symmetric")
    mean_diag = float(np.mean(np.diag(a)))
    if not mean_diag > 0:
        mean_diag = 1.0
    for level in schedule:
        jitter = level * mean_diag
        try:
            lower = np.linalg.cholesky(a + jitter * np.eye(n) if jitter else a)
        except np.linalg.LinAlgError:
            continue
        d = np.diag(lower)
        if np.all(d > 0) and np.all(np.isfinite(d)):
            return CholeskyFactor(lower, float(2.0 * np.sum(np.log(d))), jitter)
    raise FactorizationFailed(
        f"Cholesky failed for all jitter levels up to {schedule[-1]:g} x mean diagonal"
    )


def mvn_logpdf(x, mean, chol: CholeskyFactor) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.broadcast_to(np.asarray(mean, dtype=float), x.shape)
    if x.ndim != 1 or x.shape[0] != chol.n:
        raise DimensionMismatch(f"vector of length {x.shape} against a {chol.n}x{chol.n} factor")
    z = chol.half_solve(x - mean)
    return float(-0.5 * chol.n * LOG_2PI - 0.5 * chol.log_det - 0.5 * z @ z)


def gp_condition(train_inputs, train_latents, test_inputs, kernel, mean_fn, noise_var,
                 full_cov=False, chol=None) -> GaussianPosterior:
    """Posterior of the noise-free latent function at ``test_inputs``.

    ``chol`` may carry a precomputed factor of ``K + noise_var I`` for the
    training inputs.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    test_inputs = np.atleast_2d(np.asarray(test_inputs, dtype=float))
    m_star = mean_fn(test_inputs)
    n = 0 if train_inputs is None else len(train_latents)
    if full_cov:
        k_ss = kernel.gram(test_inputs, test_inputs)
    else:
        k_ss = kernel.diag(test_inputs)
    if n == 0:
        var = np.diag(k_ss).copy() if full_cov else np.asarray(k_ss, dtype=float).copy()
        return GaussianPosterior(m_star, np.maximum(var, 0.0), k_ss if full_cov else None)

    train_inputs = np.atleast_2d(np.asarray(train_inputs, dtype=float))
    if train_inputs.shape[1] != test_inputs.shape[1]:
        raise DimensionMismatch("train and test inputs have different dimensions")
    if chol is None:
        k = kernel.gram(train_inputs, train_inputs)
        k[np.diag_indices_from(k)] += noise_var
        chol = cholesky_with_jitter(k)
    resid = np.asarray(train_latents, dtype=float) - mean_fn(train_inputs)
    k_s = kernel.gram(train_inputs, test_inputs)
    mean = m_star + k_s.T @ chol.solve(resid)
    v = chol.half_solve(k_s)
    if full_cov:
        cov = k_ss - v.T @ v
        cov = 0.5 * (cov + cov.T)
        var = np.maximum(np.diag(cov).copy(), 0.0)
        return GaussianPosterior(mean, var, cov)
    var = np.maximum(k_ss - np.sum(v * v, axis=0), 0.0)
    return GaussianPosterior(mean, var)
