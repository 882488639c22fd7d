import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal

from cwgp.errors import DimensionMismatch, FactorizationFailed
from cwgp.kernels import ConstantMean, SquaredExponential
from cwgp.linalg import LOG_2PI, cholesky_with_jitter, gp_condition, mvn_logpdf


def test_cholesky_examples():
    f = cholesky_with_jitter(np.array([[4.0]]))
    assert f.lower[0, 0] == 2.0 and f.log_det == pytest.approx(np.log(4)) and f.jitter_used == 0
    f = cholesky_with_jitter(np.eye(3))
    assert np.array_equal(f.lower, np.eye(3)) and f.log_det == 0


def test_rank_deficient_jitter():
    a = np.ones((2, 2))
    f = cholesky_with_jitter(a)
    assert f.jitter_used > 0
    rec = f.lower @ f.lower.T
    target = a + f.jitter_used * np.eye(2)
    assert np.linalg.norm(rec - target) <= 1e-10 * np.linalg.norm(target)
    # eigen-decomposition oracle for the log determinant
    assert f.log_det == pytest.approx(np.sum(np.log(np.linalg.eigvalsh(target))), rel=1e-8)


def test_errors():
    with pytest.raises(DimensionMismatch):
        cholesky_with_jitter(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        cholesky_with_jitter(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(FactorizationFailed):
        cholesky_with_jitter(-np.eye(2))
    with pytest.raises(DimensionMismatch):
        mvn_logpdf(np.zeros(3), 0.0, cholesky_with_jitter(np.eye(2)))


def test_mvn_examples():
    one = cholesky_with_jitter(np.eye(1))
    assert mvn_logpdf([0.0], 0.0, one) == pytest.approx(-0.5 * LOG_2PI)
    assert mvn_logpdf([1.0], 0.0, one) == pytest.approx(-0.5 * LOG_2PI - 0.5)
    assert mvn_logpdf([1.0, 1.0], 0.0, cholesky_with_jitter(np.eye(2))) == pytest.approx(2 * (-0.5 * LOG_2PI - 0.5))


@given(st.integers(0, 2**31 - 1))
def test_mvn_matches_scipy_and_solve(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((5, 5))
    spd = a @ a.T + 0.5 * np.eye(5)
    f = cholesky_with_jitter(spd)
    x, mu = rng.standard_normal(5), rng.standard_normal(5)
    assert mvn_logpdf(x, mu, f) == pytest.approx(multivariate_normal(mu, spd).logpdf(x), rel=1e-10)
    b = rng.standard_normal((5, 2))
    assert np.allclose(f.solve(b), np.linalg.inv(spd) @ b, atol=1e-8)


def test_mvn_integrates_to_one():
    f = cholesky_with_jitter(np.array([[2.3]]))
    grid = np.linspace(-15, 15, 20001)
    dens = np.exp([mvn_logpdf([g], 0.4, f) for g in grid])
    assert trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-4)


def test_condition_interpolates():
    k = SquaredExponential(1.0, 0.7)
    t = np.array([[0.0], [1.0], [2.5]])
    x = np.array([0.3, -1.0, 2.0])
    post = gp_condition(t, x, t[1:2], k, ConstantMean(0.0), 0.0)
    assert post.mean[0] == pytest.approx(-1.0, abs=1e-8) and post.var[0] < 1e-8


def test_condition_empty_is_prior():
    k = SquaredExponential(1.7, 0.7)
    ts = np.array([[0.0], [0.4]])
    post = gp_condition(None, np.zeros(0), ts, k, ConstantMean(0.5), 0.1, full_cov=True)
    assert np.allclose(post.mean, 0.5) and np.allclose(post.cov, k.gram(ts, ts))


@given(st.integers(0, 2**31 - 1))
def test_condition_matches_dense_inverse(seed):
    rng = np.random.default_rng(seed)
    k = SquaredExponential(rng.uniform(0.5, 2), rng.uniform(0.3, 2))
    t = rng.uniform(-2, 2, (3, 1))
    x = rng.standard_normal(3)
    ts = rng.uniform(-3, 3, (4, 1))
    noise, m0 = rng.uniform(0.01, 0.5), rng.uniform(-1, 1)
    post = gp_condition(t, x, ts, k, ConstantMean(m0), noise, full_cov=True)

    def se(a, b):
        return k.value("variance") * np.exp(-0.5 * (a - b.T) ** 2 / k.value("lengthscale") ** 2)

    kinv = np.linalg.inv(se(t, t) + noise * np.eye(3))
    mean = m0 + se(ts, t) @ kinv @ (x - m0)
    cov = se(ts, ts) - se(ts, t) @ kinv @ se(t, ts)
    assert np.allclose(post.mean, mean, atol=1e-9)
    assert np.allclose(post.cov, cov, atol=1e-9)
    assert np.all(post.var <= k.value("variance") + 1e-10) and np.all(post.var >= 0)
