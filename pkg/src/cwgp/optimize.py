"""Local optimisers for unconstrained hyperparameter vectors.

``bfgs_minimize`` is a plain quasi-Newton loop with central finite-difference
gradients and Armijo backtracking. ``powell_minimize`` wraps scipy's
direction-set implementation. Both guarantee ``f* <= f(theta0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import NonFiniteObjective

# stand-in for non-finite objective values inside scipy's Powell
_PENALTY = 1e100


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    n_iter: int = 0
    n_eval: int = 0
    converged: bool = False
    message: str = ""
    trace: list = field(default_factory=list)

    @property
    def flagged(self):
        return not self.converged


class _Counted:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        try:
            v = float(self.fn(x))
        except (ArithmeticError, ValueError):
            return np.inf
        return v if np.isfinite(v) else np.inf


def finite_diff_grad(objective, theta, step=1e-6):
    """Central differences with per-coordinate step ``step * max(1, |theta_i|)``."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        h = step * max(1.0, abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        fu, fd = objective(up), objective(dn)
        if not (np.isfinite(fu) and np.isfinite(fd)):
            raise NonFiniteObjective(f"objective is not finite around coordinate {i}")
        g[i] = (fu - fd) / ((up[i] - theta[i]) + (theta[i] - dn[i]))
    return g


def bfgs_minimize(objective, theta0, max_iters=500, gtol=1e-6, rtol=1e-9, grad_step=1e-6,
                  max_step=5.0, c1=1e-4) -> OptimizeResult:
    """Quasi-Newton minimisation with an inverse-Hessian BFGS update.

    Stops when ``max|g| < gtol``, when two consecutive accepted steps after the
    first improve ``f`` by less than ``rtol * max(1, |f|)``, or after ``max_iters`` iterations. A failed
    line search or a non-finite gradient ends the run with the best iterate
    and ``converged = False``.
    """
    f = _Counted(objective)
    x = np.asarray(theta0, dtype=float).copy()
    fx = f(x)
    if not np.isfinite(fx):
        raise NonFiniteObjective("objective is not finite at the starting point")
    res = OptimizeResult(x, fx, trace=[fx])
    if x.size == 0:
        res.converged, res.message, res.n_eval = True, "no free parameters", f.calls
        return res
    try:
        g = finite_diff_grad(f, x, grad_step)
    except NonFiniteObjective as exc:
        res.message, res.n_eval = str(exc), f.calls
        return res
    n = x.size
    H = np.eye(n)
    first = True
    stalls = 0
    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        if np.max(np.abs(g)) < gtol:
            converged, message = True, "gradient tolerance reached"
            it -= 1
            break
        p = -H @ g
        slope = g @ p
        if not slope < 0:
            H = np.eye(n)
            p = -g
            slope = g @ p
        t = min(1.0, max_step / max(np.max(np.abs(p)), 1e-300))
        while True:
            xn = x + t * p
            fn = f(xn)
            if fn <= fx + c1 * t * slope:
                break
            t *= 0.5
            if t * np.max(np.abs(p)) < 1e-14 * max(1.0, np.max(np.abs(x))):
                fn = None
                break
        if fn is None:
            message = "line search failed"
            break
        try:
            gn = finite_diff_grad(f, xn, grad_step)
        except NonFiniteObjective as exc:
            x, fx = xn, fn
            res.trace.append(fx)
            message = str(exc)
            break
        s, yv = xn - x, gn - g
        improvement = fx - fn
        x, fx, g = xn, fn, gn
        res.trace.append(fx)
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if first:
                H = np.eye(n) * (sy / (yv @ yv))
                first = False
            rho = 1.0 / sy
            Hy = H @ yv
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (yv @ Hy) + rho) * np.outer(s, s)
        # the first step is unscaled, so a tiny gain there says nothing
        stalls = stalls + 1 if it > 1 and improvement <= rtol * max(1.0, abs(fx)) else 0
        if stalls >= 2:
            converged, message = True, "relative improvement below tolerance"
            break
    res.x, res.fun, res.n_iter, res.n_eval = x, fx, it, f.calls
    res.converged, res.message = converged, message
    return res


def powell_minimize(objective, theta0, max_iters=500, xtol=1e-8, ftol=1e-10) -> OptimizeResult:
    """Powell's conjugate-direction method (scipy), never worse than the start."""
    f = _Counted(objective)
    x0 = np.asarray(theta0, dtype=float).copy()
    f0 = f(x0)
    if not np.isfinite(f0):
        raise NonFiniteObjective("objective is not finite at the starting point")
    if x0.size == 0:
        return OptimizeResult(x0, f0, converged=True, message="no free parameters", n_eval=f.calls, trace=[f0])
    trace = [f0]

    def wrapped(x):
        v = f(x)
        return v if np.isfinite(v) else _PENALTY

    out = minimize(wrapped, x0, method="Powell",
                   options={"maxiter": max_iters, "xtol": xtol, "ftol": ftol},
                   callback=lambda xk: trace.append(f(xk)))
    x, fx = np.asarray(out.x, dtype=float), float(out.fun)
    if not (fx <= f0):
        x, fx = x0, f0
    return OptimizeResult(x, fx, n_iter=int(out.nit), n_eval=f.calls, converged=bool(out.success),
                          message=str(out.message), trace=trace)
