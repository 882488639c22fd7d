import numpy as np
import pytest

from cwgp.data import (
    SplitSpec, fit_scaler, load_csv, load_inputs, load_registered, registered_names, split,
    standardize_features,
)
from cwgp.errors import DataError, InvalidSpec, MissingColumn, ParseError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_toy_file(tmp_path):
    ds = load_csv(write(tmp_path, "x,y\n1,2\n2,3\n3,5\n"), "y")
    assert ds.inputs.shape == (3, 1) and ds.n == 3 and ds.dropped_rows == 0
    assert ds.feature_names == ("x",)


def test_dropped_rows(tmp_path):
    ds = load_csv(write(tmp_path, "x,y\n1,2\nabc,3\n3,\n4,nan\n5,6\n"), "y")
    assert ds.n == 2 and ds.dropped_rows == 3


def test_missing_column_and_ragged(tmp_path):
    with pytest.raises(MissingColumn):
        load_csv(write(tmp_path, "x,y\n1,2\n"), "z")
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "x,y\n1,2,3\n"), "y")
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv", "y")


def test_load_inputs_is_strict(tmp_path):
    p = write(tmp_path, "x,y\n1,2\nabc,3\n")
    with pytest.raises(ParseError) as exc:
        load_inputs(p, ["x"])
    assert exc.value.row == 3
    x, y = load_inputs(write(tmp_path, "x,y\n1,2\n", "ok.csv"), ["x"], "y")
    assert x.tolist() == [[1.0]] and y.tolist() == [2.0]


def toy(n):
    from cwgp.data import Dataset
    return Dataset(np.arange(n, dtype=float)[:, None], np.arange(n, dtype=float), ("x",), "y")


def test_split_examples():
    p = split(toy(10), SplitSpec(4, 0.5, seed=1))
    assert (p.train.n, p.validation.n, p.test.n) == (2, 2, 6)
    allidx = np.concatenate([p.indices[k] for k in ("train", "validation", "test")])
    assert sorted(allidx.tolist()) == list(range(10))
    q = split(toy(10), SplitSpec(4, 0.5, seed=1))
    assert all(np.array_equal(p.indices[k], q.indices[k]) for k in p.indices)
    a = split(toy(100), SplitSpec(50, 0.5, seed=1)).indices["train"]
    b = split(toy(100), SplitSpec(50, 0.5, seed=2)).indices["train"]
    assert not np.array_equal(a, b)
    with pytest.raises(InvalidSpec):
        split(toy(10), SplitSpec(11))


def test_scaler(rng):
    from cwgp.data import Dataset
    x = np.column_stack([rng.normal(3, 2, 20), np.full(20, 7.0)])
    tr = Dataset(x, np.zeros(20), ("a", "b"), "y")
    te = Dataset(x[:5] + 1.0, np.zeros(5), ("a", "b"), "y")
    (tr2, te2), sc = standardize_features(tr, te)
    assert np.allclose(tr2.inputs[:, 0].mean(), 0) and np.allclose(tr2.inputs[:, 0].std(), 1)
    assert sc.scale[1] == 1.0 and np.allclose(tr2.inputs[:, 1], 0.0)
    # statistics come from the training set only
    assert np.allclose(te2.inputs, (te.inputs - x.mean(0)) / np.where(x.std(0) < 1e-12, 1, x.std(0)))
    assert np.allclose(sc.inverse_transform(sc.transform(x)), x, atol=1e-12)
    assert np.array_equal(fit_scaler(x).mean, sc.mean)


def test_registry():
    names = registered_names()
    assert {"abalone", "sunspots", "tbill", "ailerons", "creep"} <= set(names)
    ab = load_registered("abalone")
    assert ab.dim == 10 and ab.n > 4000  # sex one-hot encoded to three columns
    assert load_registered("tbill").n == 203
    with pytest.raises(DataError):
        load_registered("ailerons")
    with pytest.raises(DataError):
        load_registered("nonexistent")
