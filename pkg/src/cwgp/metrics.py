"""Point and density performance indices (lower is better for all of them)."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyInput


def _pair(y, y_star):
    y = np.asarray(y, dtype=float).ravel()
    y_star = np.asarray(y_star, dtype=float).ravel()
    if y.size != y_star.size:
        raise DimensionMismatch(f"{y.size} targets vs {y_star.size} predictions")
    if y.size == 0:
        raise EmptyInput("need at least one point")
    return y, y_star


def rmse(y, y_star) -> float:
    y, y_star = _pair(y, y_star)
    return float(np.sqrt(np.mean((y - y_star) ** 2)))


def mae(y, y_star) -> float:
    y, y_star = _pair(y, y_star)
    return float(np.mean(np.abs(y - y_star)))


def nlpd(log_densities) -> float:
    ld = np.asarray(log_densities, dtype=float).ravel()
    if ld.size == 0:
        raise EmptyInput("need at least one log density")
    return float(-np.mean(ld))


@dataclass
class EvalResult:
    rmse: float
    mae: float
    nlpd: float
    nll: float
    n: int
    wall_times: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def evaluate(summary, targets, nll_value, point="median", wall_times=None) -> EvalResult:
    """Indices of a :class:`~cwgp.model.PredictionSummary` with log densities."""
    y_star = summary.point(point)
    return EvalResult(
        rmse=rmse(targets, y_star), mae=mae(targets, y_star), nlpd=nlpd(summary.log_density),
        nll=float(nll_value), n=int(np.size(targets)), wall_times=dict(wall_times or {}),
    )
