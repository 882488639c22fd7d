"""Gauss-Hermite rules and latent-space expectations of warped quantities."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import InvalidOrder

SQRT_PI = np.sqrt(np.pi)
DEFAULT_ORDER = 20


@dataclass(frozen=True)
class GaussHermiteRule:
    """Nodes and weights for ``int f(x) exp(-x^2) dx ~ sum_i w_i f(x_i)``."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.size

    def integrate(self, fn):
        # fold mirrored nodes so odd parts cancel exactly
        vals = fn(self.nodes)
        h = self.order // 2
        total = np.sum(self.weights[:h] * (vals[:h] + vals[::-1][:h]))
        if self.order % 2:
            total += self.weights[h] * vals[h]
        return float(total)


@lru_cache(maxsize=None)
def _golub_welsch(k):
    # Jacobi matrix of the physicists' Hermite recurrence: zero diagonal,
    # off-diagonal sqrt(i / 2).
    off = np.sqrt(np.arange(1, k) / 2.0)
    nodes = eigh_tridiagonal(np.zeros(k), off, eigvals_only=True)
    # Christoffel numbers 1 / sum_j p_j(x)^2 from the orthonormal recurrence keep
    # full relative accuracy in the tiny outer weights, unlike eigenvector entries
    p_prev = np.zeros(k)
    p = np.full(k, np.pi**-0.25)
    acc = p * p
    for j in range(k - 1):
        p, p_prev = (np.sqrt(2.0) * nodes * p - np.sqrt(j) * p_prev) / np.sqrt(j + 1.0), p
        acc += p * p
    weights = 1.0 / acc
    # enforce the exact symmetry of the rule
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    if k % 2:
        nodes[k // 2] = 0.0
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gh_rule(k: int) -> GaussHermiteRule:
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= 100:
        raise InvalidOrder(f"Gauss-Hermite order must be an integer in [1, 100], got {k!r}")
    nodes, weights = _golub_welsch(int(k))
    return GaussHermiteRule(nodes, weights)


def expect_warped(fn, m_x, s_x, rule: GaussHermiteRule):
    """``E[fn(x)]`` for ``x ~ N(m_x, s_x^2)``; broadcasts over arrays of ``m_x, s_x``.

    ``fn`` is typically ``h o phi^{-1}`` and must accept arrays.
    """
    m = np.asarray(m_x, dtype=float)
    s = np.asarray(s_x, dtype=float)
    if np.any(s < 0):
        raise ValueError("standard deviation must be non-negative")
    pts = np.sqrt(2.0) * s[..., None] * rule.nodes + m[..., None]
    vals = fn(pts)
    out = (vals @ rule.weights) / SQRT_PI
    zero = np.broadcast_to(s == 0, out.shape)
    if np.any(zero):
        # a degenerate Gaussian is a point mass at the mean
        at_mean = np.reshape(fn(np.atleast_1d(np.broadcast_to(m, out.shape))), out.shape)
        out = np.where(zero, at_mean, out)
    return float(out) if out.ndim == 0 else out


def latent_points(m_x, s_x, rule: GaussHermiteRule):
    """Latent evaluation points ``sqrt(2) s x_i + m``, shape ``(..., k)``."""
    return np.sqrt(2.0) * np.asarray(s_x, dtype=float)[..., None] * rule.nodes + np.asarray(m_x, dtype=float)[..., None]


def combine(values, rule: GaussHermiteRule):
    return (values @ rule.weights) / SQRT_PI
