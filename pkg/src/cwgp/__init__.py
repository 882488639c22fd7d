"""Compositionally-warped Gaussian process regression."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .kernels import ARDSquaredExponential, ConstantMean, SpectralMixture, SquaredExponential
from .model import PredictionSummary, WarpedGP, shape_diagnostics
from .quadrature import expect_warped, gh_rule
from .train import TrainConfig, multi_start_train
from .warpings import (
    Affine, Arcsinh, BoxCox, CompositeWarping, Log, Shift, SinhArcsinh, TanhMix, numeric_inverse, parse_code,
    sal_layer,
)
