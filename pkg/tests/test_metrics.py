import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cwgp.errors import DimensionMismatch, EmptyInput
from cwgp.metrics import evaluate, mae, nlpd, rmse
from cwgp.model import WarpedGP
from cwgp.kernels import SquaredExponential

vec = arrays(float, st.integers(1, 30), elements=st.floats(-1e3, 1e3))


def test_examples():
    assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))
    assert mae([0, 0], [3, 4]) == pytest.approx(3.5)
    assert rmse([1.0], [3.0]) == 2.0
    assert rmse([1, 2], [1, 2]) == 0 and mae([1, 2], [1, 2]) == 0
    assert nlpd([-0.5 * np.log(2 * np.pi)]) == pytest.approx(0.5 * np.log(2 * np.pi))
    assert nlpd([0.0, 0.0]) == 0.0
    lp = np.array([-1.0, -2.5, 0.3])
    assert nlpd(lp) == pytest.approx(-sum(lp) / 3)


def test_errors():
    with pytest.raises(DimensionMismatch):
        rmse([1, 2], [1])
    with pytest.raises(EmptyInput):
        mae([], [])


@given(vec, st.floats(-100, 100), st.integers(0, 1000))
def test_invariances(y, shift, seed):
    ys = y[::-1] * 0.5
    perm = np.random.default_rng(seed).permutation(y.size)
    assert rmse(y, ys) == pytest.approx(rmse(y[perm], ys[perm]))
    assert mae(y, ys) == pytest.approx(mae(ys, y))
    assert rmse(y + shift, ys + shift) == pytest.approx(rmse(y, ys), rel=1e-9, abs=1e-6)
    assert rmse(y, ys) >= 0 and mae(y, ys) >= 0


@given(st.floats(-20, 5), st.integers(1, 50))
def test_nlpd_copies(lp, n):
    assert nlpd([lp] * n) == pytest.approx(nlpd([lp]))


def test_evaluate():
    m = WarpedGP(SquaredExponential(), noise_var=0.1)
    y = np.array([0.1, -0.3])
    s = m.summarize(np.zeros(2), np.ones(2), test_targets=y)
    r = evaluate(s, y, 3.0)
    assert r.rmse == pytest.approx(rmse(y, np.zeros(2))) and r.nll == 3.0 and r.n == 2
    assert r.nlpd == pytest.approx(nlpd(s.log_density))
