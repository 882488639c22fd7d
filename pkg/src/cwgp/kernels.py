"""Stationary covariance functions and the constant mean for the latent GP.

All positive hyperparameters are trained on the log scale. Observation noise
is not a kernel parameter; it belongs to :class:`cwgp.model.WarpedGP`.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, InvalidParameter
from .params import Parameterized


def _as_inputs(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


class Kernel(Parameterized):
    variant = ""

    def gram(self, a, b):
        a, b = _as_inputs(a), _as_inputs(b)
        if a.shape[1] != b.shape[1]:
            raise DimensionMismatch(f"inputs have {a.shape[1]} and {b.shape[1]} columns")
        self._check_dim(a.shape[1])
        return self._gram(a, b)

    def diag(self, a):
        a = _as_inputs(a)
        self._check_dim(a.shape[1])
        return np.full(a.shape[0], self.prior_variance)

    def __call__(self, t, t2) -> float:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        t2 = np.atleast_1d(np.asarray(t2, dtype=float))
        if t.shape != t2.shape:
            raise DimensionMismatch("kernel arguments differ in dimension")
        return float(self.gram(t[None, :], t2[None, :])[0, 0])

    def _check_dim(self, d):
        pass


class SquaredExponential(Kernel):
    """``k(r) = variance * exp(-r^2 / (2 lengthscale^2))``"""

    variant = "se"
    transforms = {"variance": "log", "lengthscale": "log"}

    def __init__(self, variance=1.0, lengthscale=1.0, fixed=()):
        super().__init__({"variance": variance, "lengthscale": lengthscale}, fixed)

    def _validate(self):
        for n in ("variance", "lengthscale"):
            if self._values[n].size != 1 or self._values[n][0] <= 0:
                raise InvalidParameter(f"SE {n} must be a positive scalar")

    @property
    def prior_variance(self):
        return self.value("variance")

    def _gram(self, a, b):
        ell = self.value("lengthscale")
        d2 = cdist(a / ell, b / ell, "sqeuclidean")
        return self.value("variance") * np.exp(-0.5 * d2)


class ARDSquaredExponential(Kernel):
    """Squared exponential with one lengthscale per input dimension."""

    variant = "ard_se"
    transforms = {"variance": "log", "lengthscales": "log"}

    def __init__(self, variance=1.0, lengthscales=(1.0,), fixed=()):
        super().__init__({"variance": variance, "lengthscales": lengthscales}, fixed)

    def _scalar(self, name):
        return name == "variance"

    def _validate(self):
        if self._values["variance"].size != 1 or self._values["variance"][0] <= 0:
            raise InvalidParameter("ARD variance must be a positive scalar")
        if np.any(self._values["lengthscales"] <= 0):
            raise InvalidParameter("ARD lengthscales must be positive")

    @property
    def prior_variance(self):
        return self.value("variance")

    def _check_dim(self, d):
        if d != self._values["lengthscales"].size:
            raise DimensionMismatch(
                f"ARD kernel has {self._values['lengthscales'].size} lengthscales, inputs have {d} columns"
            )

    def _gram(self, a, b):
        ell = self._values["lengthscales"]
        d2 = cdist(a / ell, b / ell, "sqeuclidean")
        return self.value("variance") * np.exp(-0.5 * d2)


class SpectralMixture(Kernel):
    """1-D spectral mixture in ordinary (cycles per input unit) frequency.

    ``k(tau) = sum_q weight_q exp(-2 pi^2 tau^2 bandwidth_q) cos(2 pi frequency_q tau)``
    where ``bandwidth_q`` is the variance of the q-th spectral Gaussian.
    """

    variant = "spectral_mixture"
    transforms = {"weights": "log", "frequencies": "log", "bandwidths": "log"}

    def __init__(self, weights=(1.0,), frequencies=(1.0,), bandwidths=(1.0,), fixed=()):
        super().__init__(
            {"weights": weights, "frequencies": frequencies, "bandwidths": bandwidths}, fixed
        )

    def _scalar(self, name):
        return False

    def _validate(self):
        q = self._values["weights"].size
        if any(self._values[n].size != q for n in self.transforms):
            raise InvalidParameter("spectral mixture parameter vectors must have equal length")
        if np.any(self._values["weights"] <= 0) or np.any(self._values["bandwidths"] <= 0):
            raise InvalidParameter("spectral mixture weights and bandwidths must be positive")
        if np.any(self._values["frequencies"] < 0):
            raise InvalidParameter("spectral mixture frequencies must be non-negative")

    @property
    def n_components(self):
        return self._values["weights"].size

    @property
    def prior_variance(self):
        return float(np.sum(self._values["weights"]))

    def _check_dim(self, d):
        if d != 1:
            raise DimensionMismatch("spectral mixture kernel supports 1-D inputs only")

    def _gram(self, a, b):
        tau = a[:, 0][:, None] - b[:, 0][None, :]
        tau2 = tau * tau
        out = np.zeros_like(tau)
        for w, mu, v in zip(*(self._values[n] for n in self.transforms)):
            out += w * np.exp(-2.0 * np.pi**2 * tau2 * v) * np.cos(2.0 * np.pi * mu * tau)
        return out


class ConstantMean(Parameterized):
    variant = "constant"
    transforms = {"value": "identity"}

    def __init__(self, value=0.0, fixed=()):
        super().__init__({"value": value}, fixed)

    def __call__(self, inputs):
        return np.full(_as_inputs(inputs).shape[0], self.value("value"))


KERNELS = {cls.variant: cls for cls in (SquaredExponential, ARDSquaredExponential, SpectralMixture)}


def kernel_eval(kernel: Kernel, t, t2) -> float:
    return kernel(t, t2)


def gram(kernel: Kernel, inputs_a, inputs_b):
    return kernel.gram(inputs_a, inputs_b)
