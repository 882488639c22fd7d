"""Constrained parameters with an unconstrained optimisation view.

Every trainable object keeps the unconstrained vector it was built from, so
``obj.with_theta(t).theta`` returns ``t`` bit for bit. Constrained values are
derived from it on construction.
"""
from __future__ import annotations

import copy

import numpy as np

from .errors import InvalidParameter

# transform name -> (to_raw, from_raw); "logabs" keeps the sign fixed.
_TRANSFORMS = {
    "identity": (lambda v, s: v, lambda r, s: r),
    "log": (lambda v, s: np.log(v), lambda r, s: np.exp(r)),
    "logabs": (lambda v, s: np.log(np.abs(v)), lambda r, s: s * np.exp(r)),
}


class Parameterized:
    """Mixin holding named vector parameters.

    Subclasses define ``transforms`` (name -> transform) in declaration order
    and may override ``_validate``.
    """

    transforms: dict = {}

    def __init__(self, values: dict, fixed=()):
        unknown = set(fixed) - set(self.transforms)
        if unknown:
            raise InvalidParameter(f"unknown fixed parameter(s) {sorted(unknown)}")
        self._values = {}
        for name in self.transforms:
            if name not in values:
                raise InvalidParameter(f"{type(self).__name__} requires parameter {name!r}")
            v = np.atleast_1d(np.asarray(values[name], dtype=float)).copy()
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise InvalidParameter(f"parameter {name!r} must be a finite scalar or vector")
            self._values[name] = v
        self._fixed = frozenset(fixed)
        self._signs = {n: np.where(self._values[n] < 0, -1.0, 1.0) for n in self.transforms}
        self._validate()
        self._raw = {}
        for name in self.free_names:
            to_raw, _ = _TRANSFORMS[self.transforms[name]]
            with np.errstate(divide="ignore"):
                raw = to_raw(self._values[name], self._signs[name])
            if not np.all(np.isfinite(raw)):
                raise InvalidParameter(
                    f"parameter {name!r}={self._values[name]} cannot be trained; fix it instead"
                )
            self._raw[name] = raw

    def _validate(self):
        pass

    @property
    def free_names(self):
        return [n for n in self.transforms if n not in self._fixed]

    @property
    def fixed(self):
        return self._fixed

    @property
    def n_params(self) -> int:
        return sum(self._values[n].size for n in self.free_names)

    @property
    def theta(self) -> np.ndarray:
        if not self.free_names:
            return np.zeros(0)
        return np.concatenate([self._raw[n] for n in self.free_names])

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise InvalidParameter(f"expected {self.n_params} parameters, got shape {theta.shape}")
        new = copy.copy(self)
        new._values = dict(self._values)
        new._raw = {}
        i = 0
        for name in self.free_names:
            k = self._values[name].size
            raw = theta[i:i + k].copy()
            _, from_raw = _TRANSFORMS[self.transforms[name]]
            with np.errstate(over="ignore"):
                new._values[name] = from_raw(raw, self._signs[name])
            new._raw[name] = raw
            i += k
        new._on_update()
        return new

    def _on_update(self):
        pass

    def value(self, name):
        v = self._values[name]
        return float(v[0]) if v.size == 1 and self._scalar(name) else v.copy()

    def _scalar(self, name):
        return True

    @property
    def params(self) -> dict:
        return {n: self.value(n) for n in self.transforms}

    def raw(self, name):
        return self._raw[name].copy()
