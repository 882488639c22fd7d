import numpy as np
import pytest
from hypothesis import given, strategies as st

from cwgp.errors import DimensionMismatch, InvalidParameter
from cwgp.kernels import ARDSquaredExponential, ConstantMean, SpectralMixture, SquaredExponential, kernel_eval
from cwgp.linalg import cholesky_with_jitter


def test_se_examples():
    k = SquaredExponential(1.0, 1.0)
    assert kernel_eval(k, 0.3, 0.3) == pytest.approx(1.0)
    assert kernel_eval(k, 0.0, 1.0) == pytest.approx(np.exp(-0.5))
    assert np.allclose(k.gram(np.array([[1.0], [1.0]]), np.array([[1.0], [1.0]])), 1.0)
    assert np.allclose(SquaredExponential(2.5, 1.0).gram(np.array([[0.0]]), np.array([[0.0]])), [[2.5]])


def test_sm_at_zero():
    k = SpectralMixture([2.0], [0.37], [0.8])
    assert kernel_eval(k, 1.2, 1.2) == 2.0
    k2 = SpectralMixture([2.0, 0.5], [0.1, 0.3], [0.2, 0.9])
    assert np.allclose(k2.diag(np.array([[0.0], [3.0]])), 2.5)


def test_sm_formula(rng):
    w, mu, v = rng.uniform(0.1, 2, 3), rng.uniform(0, 1, 3), rng.uniform(0.01, 1, 3)
    k = SpectralMixture(w, mu, v)
    t = rng.uniform(-5, 5, (6, 1))
    tau = t - t.T
    ref = sum(w[q] * np.exp(-2 * np.pi**2 * tau**2 * v[q]) * np.cos(2 * np.pi * mu[q] * tau) for q in range(3))
    assert np.allclose(k.gram(t, t), ref, atol=1e-13)


def test_gram_matches_loop(rng):
    for k in (SquaredExponential(1.3, 0.6), ARDSquaredExponential(0.7, [0.5, 2.0]), SpectralMixture([1.0], [0.2], [0.1])):
        d = 2 if isinstance(k, ARDSquaredExponential) else 1
        a, b = rng.uniform(-2, 2, (4, d)), rng.uniform(-2, 2, (3, d))
        loop = np.array([[kernel_eval(k, ai, bj) for bj in b] for ai in a])
        assert np.allclose(k.gram(a, b), loop, atol=1e-14)


def test_ard_equal_lengthscales_is_se(rng):
    a = rng.uniform(-3, 3, (7, 3))
    se = SquaredExponential(1.4, 0.8).gram(a, a)
    ard = ARDSquaredExponential(1.4, [0.8] * 3).gram(a, a)
    assert np.allclose(se, ard, atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.sampled_from(["se", "ard", "sm"]))
def test_gram_psd(seed, kind):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 21))
    if kind == "se":
        k, d = SquaredExponential(rng.uniform(0.1, 5), rng.uniform(0.05, 5)), 1
    elif kind == "ard":
        d = 3
        k = ARDSquaredExponential(rng.uniform(0.1, 5), rng.uniform(0.05, 5, d))
    else:
        q, d = int(rng.integers(1, 4)), 1
        k = SpectralMixture(rng.uniform(0.1, 3, q), rng.uniform(0, 2, q), rng.uniform(0.001, 2, q))
    a = rng.uniform(-5, 5, (n, d))
    g = k.gram(a, a)
    assert np.allclose(g, g.T)
    cholesky_with_jitter(g + 1e-8 * np.mean(np.diag(g)) * np.eye(n))


def test_validation():
    with pytest.raises(InvalidParameter):
        SquaredExponential(-1.0, 1.0)
    with pytest.raises(InvalidParameter):
        SpectralMixture([1.0, 2.0], [0.1], [0.1])
    with pytest.raises(DimensionMismatch):
        SpectralMixture().gram(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(DimensionMismatch):
        ARDSquaredExponential(1.0, [1.0, 1.0]).gram(np.zeros((2, 3)), np.zeros((2, 3)))


def test_theta_is_log_and_round_trips():
    k = ARDSquaredExponential(2.0, [0.5, 3.0])
    assert np.allclose(k.theta, np.log([2.0, 0.5, 3.0]))
    assert np.array_equal(k.with_theta(k.theta).theta, k.theta)
    assert ConstantMean(1.5)(np.zeros((3, 2))).tolist() == [1.5] * 3
