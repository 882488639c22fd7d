import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal, norm

from cwgp.errors import DomainError, UnsupportedVariant
from cwgp.kernels import ConstantMean, SquaredExponential
from cwgp.model import (
    WarpedGP, boxcox_mode, johnson_su_moments, lognormal_moment, shape_diagnostics,
)
from cwgp.quadrature import expect_warped, gh_rule
from cwgp.warpings import Affine, Arcsinh, BoxCox, CompositeWarping, Log, SinhArcsinh, TanhMix, parse_code


def plain_gp_reference(t, y, ts, var, ell, noise, m0):
    """From-scratch GP with explicit inverses."""
    def k(a, b):
        return var * np.exp(-0.5 * (a[:, None, 0] - b[None, :, 0]) ** 2 / ell**2)
    K = k(t, t) + noise * np.eye(len(y))
    Ki = np.linalg.inv(K)
    mean = m0 + k(ts, t) @ Ki @ (y - m0)
    cov = k(ts, ts) - k(ts, t) @ Ki @ k(t, ts)
    nll = -multivariate_normal(np.full(len(y), m0), K).logpdf(y)
    return nll, mean, cov


def random_instance(rng):
    n = int(rng.integers(2, 31))
    t = rng.uniform(-3, 3, (n, 1))
    y = rng.standard_normal(n)
    ts = rng.uniform(-4, 4, (5, 1))
    var, ell, noise, m0 = rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.05, 0.5), rng.uniform(-1, 1)
    model = WarpedGP(SquaredExponential(var, ell), ConstantMean(m0), noise)
    return model, t, y, ts, (var, ell, noise, m0)


@given(st.integers(0, 2**31 - 1))
def test_gp_degeneracy(seed):
    rng = np.random.default_rng(seed)
    model, t, y, ts, p = random_instance(rng)
    nll, mean, cov = plain_gp_reference(t, y, ts, *p)
    assert model.nll(t, y) == pytest.approx(nll, rel=1e-10, abs=1e-10)
    cache = model.fit_cache(t, y)
    assert model.nll_from_cache(cache) == pytest.approx(nll, rel=1e-10, abs=1e-10)
    s = model.predict(cache, ts)
    assert np.allclose(s.median, mean, atol=1e-10) and np.allclose(s.gh_mean, mean, atol=1e-10)
    assert np.allclose(s.latent_sd**2, np.diag(cov) + p[2], atol=1e-10)


def test_sample_degeneracy(rng):
    model, t, y, ts, p = random_instance(rng)
    _, mean, cov = plain_gp_reference(t, y, ts, *p)
    paths = model.sample(model.fit_cache(t, y), ts, 4, seed=3)
    # identical draws through an independent Cholesky of the reference covariance
    from cwgp.linalg import cholesky_with_jitter
    z = np.random.default_rng(3).standard_normal((4, ts.shape[0]))
    ref = mean + z @ cholesky_with_jitter(0.5 * (cov + cov.T)).lower.T
    assert np.allclose(paths, ref, atol=1e-8)


def test_nll_empty_warping_equals_mvn(toy_gp_data):
    t, y = toy_gp_data
    m = WarpedGP(SquaredExponential(1.2, 0.8), ConstantMean(0.1), 0.05)
    K = m.kernel.gram(t, t) + 0.05 * np.eye(len(y))
    assert m.nll(t, y) == pytest.approx(-multivariate_normal(np.full(len(y), 0.1), K).logpdf(y), abs=1e-12)


def test_nll_affine_change_of_variables(toy_gp_data):
    t, y = toy_gp_data
    b = 2.7
    base = WarpedGP(SquaredExponential(1.2, 0.8), ConstantMean(0.1), 0.05)
    warped = base.with_warping(CompositeWarping([Affine(0.0, b)]))
    assert warped.nll(t, y) == pytest.approx(base.nll(t, b * y) - len(y) * np.log(b), rel=1e-12)


def test_nll_log_direct_density(rng):
    t = rng.uniform(0, 3, (5, 1))
    y = np.exp(rng.standard_normal(5))
    m = WarpedGP(SquaredExponential(0.9, 1.1), ConstantMean(0.2), 0.1, warping=CompositeWarping([Log()]))
    K = m.kernel.gram(t, t) + 0.1 * np.eye(5)
    dens = np.prod(1.0 / y) * multivariate_normal(np.full(5, 0.2), K).pdf(np.log(y))
    assert m.nll(t, y) == pytest.approx(-np.log(dens), rel=1e-10)


def test_nll_domain_error():
    m = WarpedGP(SquaredExponential(), warping=CompositeWarping([Log()]))
    with pytest.raises(DomainError) as exc:
        m.nll(np.arange(3.0)[:, None], np.array([1.0, -2.0, 3.0]))
    assert exc.value.index == 1


def test_identity_layers_leave_nll_unchanged(toy_gp_data):
    t, y = toy_gp_data
    m = WarpedGP(SquaredExponential(1.2, 0.8), ConstantMean(0.1), 0.05, warping=parse_code("SA-L"))
    m = m.with_theta(m.theta + 0.3)
    base = m.nll(t, y)
    for extra in (Affine(0.0, 1.0), SinhArcsinh(0.0, 1.0)):
        assert abs(m.with_warping(m.warping + CompositeWarping([extra])).nll(t, y) - base) < 1e-12


def test_cache_invariants(toy_gp_data):
    t, y = toy_gp_data
    m = WarpedGP(SquaredExponential(), ConstantMean(), 0.1, warping=parse_code("SA-L"))
    m = m.with_theta(m.theta + 0.2)
    c = m.fit_cache(t, y)
    assert np.array_equal(c.train_latents, m.warping.forward(y))
    assert m.nll_from_cache(c) == pytest.approx(m.nll(t, y), abs=1e-10)
    empty = m.fit_cache(np.zeros((0, 1)), np.zeros(0))
    post = m.latent_posterior(empty, t[:2])
    assert np.allclose(post.mean, m.mean(t[:2])) and np.allclose(post.var, m.kernel.diag(t[:2]))


def test_theta_views_round_trip():
    m = WarpedGP(SquaredExponential(1.3, 0.4), ConstantMean(0.2), 0.07, warping=parse_code("BC-L-SA"))
    assert np.array_equal(m.with_theta(m.theta).theta, m.theta)
    assert np.array_equal(np.concatenate([m.theta_x, m.theta_phi]), m.theta)
    assert m.theta_phi.size == m.warping.param_count


def test_prediction_examples():
    plain = WarpedGP(SquaredExponential(), noise_var=0.0)
    s = plain.summarize(np.array([0.5]), np.array([4.0]))
    z = norm.ppf(0.975)
    assert z == pytest.approx(1.96, abs=1e-3)
    assert s.median[0] == s.gh_mean[0] == 0.5 or s.gh_mean[0] == pytest.approx(0.5, abs=1e-12)
    assert s.lower[0] == pytest.approx(0.5 - 2 * z) and s.upper[0] == pytest.approx(0.5 + 2 * z)

    logm = WarpedGP(SquaredExponential(), noise_var=0.0, warping=CompositeWarping([Log()]))
    s = logm.summarize(np.array([0.0]), np.array([1.0]))
    assert s.median[0] == pytest.approx(1.0)
    assert s.gh_mean[0] == pytest.approx(np.exp(0.5), rel=1e-4)
    assert s.lower[0] == pytest.approx(np.exp(-z)) and s.upper[0] == pytest.approx(np.exp(z))


def test_interval_ordering_and_tightening(rng):
    m = WarpedGP(SquaredExponential(), ConstantMean(), 0.1, warping=parse_code("BC-L-SA"))
    m = m.with_theta(m.theta + rng.uniform(-0.5, 0.5, m.theta.size))
    mu, var = rng.uniform(-1, 1, 50), rng.uniform(0.01, 1, 50)
    wide = m.summarize(mu, var, 0.99)
    narrow = m.summarize(mu, var, 0.8)
    assert np.all(wide.lower <= wide.median) and np.all(wide.median <= wide.upper)
    assert np.all(wide.lower <= narrow.lower) and np.all(narrow.upper <= wide.upper)
    latent = m.summarize(mu, var, 0.99, noisy=False)
    assert np.all(latent.lower >= wide.lower - 1e-12)


def test_gh_mean_equals_median_for_affine():
    m = WarpedGP(SquaredExponential(), noise_var=0.2, warping=CompositeWarping([Affine(1.0, -3.0)]))
    s = m.summarize(np.array([0.3, -2.0]), np.array([0.5, 2.0]))
    assert np.allclose(s.gh_mean, s.median, atol=1e-10)


def test_log_density_integrates_to_one():
    m = WarpedGP(SquaredExponential(), noise_var=0.05, warping=parse_code("BC-L-SA"))
    m = m.with_theta(m.theta + 0.2)
    grid = np.linspace(-80, 80, 400000)  # sign-extended Box-Cox puts mass on y < 0
    ld = m.log_density(grid, 0.4, 0.7)
    assert trapezoid(np.exp(ld), grid) == pytest.approx(1.0, abs=1e-3)


def test_sampling_examples(toy_gp_data):
    t, y = toy_gp_data
    plain = WarpedGP(SquaredExponential(1.0, 0.7), noise_var=0.0)
    paths = plain.sample(plain.fit_cache(t, y), t[3:4], 20, seed=0)
    assert np.allclose(paths, y[3], atol=1e-4)
    a, b = 0.7, 2.0
    aff = plain.with_warping(CompositeWarping([Affine(a, b)]))
    base = plain.sample(None, t, 3, seed=5)
    assert np.allclose(aff.sample(None, t, 3, seed=5), (base - a) / b)
    logm = plain.with_warping(CompositeWarping([Log()]))
    assert np.all(logm.sample(None, t, 50, seed=1) > 0)


def test_lognormal_sampling_mean():
    m = WarpedGP(SquaredExponential(0.64, 1.0), ConstantMean(0.3), 0.0, warping=CompositeWarping([Log()]))
    draws = m.sample(None, np.zeros((1, 1)), 50_000, seed=11)[:, 0]
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - np.exp(0.3 + 0.32)) < 3 * se


def test_nrm_counts():
    tanh = WarpedGP(SquaredExponential(), noise_var=0.1, warping=parse_code("T2"))
    closed = WarpedGP(SquaredExponential(), noise_var=0.1, warping=parse_code("BC-L-SA"))
    mu, var = np.linspace(-1, 1, 5), np.full(5, 0.3)
    assert tanh.summarize(mu, var).nrm_iterations > 0
    assert closed.summarize(mu, var).nrm_iterations == 0


class TestShapes:
    def test_boxcox_unit_lambda(self):
        assert boxcox_mode(1.0, 2.0, 0.7) == pytest.approx(3.0)

    def test_boxcox_grid_oracle(self):
        lam, m, s = 0.5, 1.0, 0.5
        w = BoxCox(lam)
        grid = np.linspace(1e-3, 20, 1_000_000)
        x, ld = w.forward_and_log_derivative(grid)
        dens = norm.logpdf(x, m, s) + ld
        assert boxcox_mode(lam, m, s) == pytest.approx(grid[np.argmax(dens)], abs=1e-3)

    def test_lognormal(self):
        assert lognormal_moment(2, 0.1, 0.4) == pytest.approx(np.exp(0.2 + 2 * 0.16))
        d = shape_diagnostics(CompositeWarping([Log()]), 0.2, 0.5)
        assert d.mode == pytest.approx(np.exp(0.2 - 0.25))
        assert d.mean == pytest.approx(expect_warped(np.exp, 0.2, 0.5, gh_rule(40)), rel=1e-10)

    def test_johnson_su(self):
        layer = Arcsinh(0.0, 1.3, 0.7, 2.0)
        assert johnson_su_moments(layer)[0] == pytest.approx(0.7)
        layer = Arcsinh(0.4, 1.3, -0.2, 0.8)
        mean, var = johnson_su_moments(layer, 0.3, 0.6)
        r = gh_rule(60)
        gm = expect_warped(layer.inverse, 0.3, 0.6, r)
        gv = expect_warped(lambda x: layer.inverse(x) ** 2, 0.3, 0.6, r) - gm**2
        assert mean == pytest.approx(gm, rel=1e-4) and var == pytest.approx(gv, rel=1e-4)

    def test_unsupported(self):
        with pytest.raises(UnsupportedVariant):
            shape_diagnostics(CompositeWarping([TanhMix()]), 0.0, 1.0)
