import json

import numpy as np
import pytest

from cwgp.cli import main
from cwgp.serialize import load_model


@pytest.fixture
def toy_csv(tmp_path):
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 6, 25))
    y = np.exp(0.6 * np.sin(t)) + 0.05 * rng.standard_normal(25)
    p = tmp_path / "toy.csv"
    p.write_text("t,y\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(t, y)))
    return p, t, y


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def strip_times(obj):
    if isinstance(obj, dict):
        return {k: strip_times(v) for k, v in obj.items() if k not in ("timing", "wall_time")}
    if isinstance(obj, list):
        return [strip_times(v) for v in obj]
    return obj


def fit(tmp_path, csv, capsys, name="m.toml", *extra):
    out = tmp_path / name
    code, _, err = run(["fit", "--data", csv, "--target", "y", "--max-iters", 40, "--random-starts", 1,
                        "--out", out, *extra], capsys)
    assert code == 0, err
    return out


def test_fit_round_trip_and_determinism(tmp_path, toy_csv, capsys):
    csv, t, y = toy_csv
    m1 = fit(tmp_path, csv, capsys, "a.toml", "--warping", "SA-L")
    m2 = fit(tmp_path, csv, capsys, "b.toml", "--warping", "SA-L")
    assert m1.read_text() == m2.read_text()
    r1 = json.loads(m1.with_suffix(".report.json").read_text())
    r2 = json.loads(m2.with_suffix(".report.json").read_text())
    assert strip_times(r1) == strip_times(r2)
    mf = load_model(m1)
    assert mf.model.nll(mf.inputs, mf.targets) == pytest.approx(r1["train"]["best_nll"], abs=1e-9)


def test_log_domain_error(tmp_path, capsys):
    p = tmp_path / "neg.csv"
    p.write_text("t,y\n0,1.0\n1,2.0\n2,-0.5\n3,1.2\n")
    code, _, err = run(["fit", "--data", p, "--target", "y", "--warping", "LOG", "--out", tmp_path / "m.toml"], capsys)
    rec = json.loads(err.strip().splitlines()[-1])
    assert code == 3 and rec["error"] == "DomainError" and rec["row_index"] == 2


def test_usage_errors(tmp_path, capsys):
    assert run(["fit", "--out", tmp_path / "x.toml"], capsys)[0] == 1
    assert run(["nonsense"], capsys)[0] == 1
    code, _, err = run(["fit", "--data", tmp_path / "missing.csv", "--target", "y", "--out", tmp_path / "x"], capsys)
    assert code == 3 and json.loads(err)["exit_code"] == 3


def test_predict_columns_and_interpolation(tmp_path, toy_csv, capsys):
    csv, t, y = toy_csv
    model = fit(tmp_path, csv, capsys, "gp.toml", "--noise-var", 0, "--no-standardize")
    out = tmp_path / "p.csv"
    assert run(["predict", "--model", model, "--data", csv, "--out", out], capsys)[0] == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    assert out.read_text().splitlines()[0] == "median,gh_mean,lower,upper,latent_sd"
    assert rows.shape == (25, 5)
    assert np.allclose(rows[:, 0], y, atol=1e-6)
    assert np.all(rows[:, 2] <= rows[:, 0]) and np.all(rows[:, 0] <= rows[:, 3])
    assert run(["predict", "--model", model, "--data", csv, "--with-density", "--out", out], capsys)[0] == 0
    assert np.loadtxt(out, delimiter=",", skiprows=1).shape == (25, 6)


def test_sample(tmp_path, toy_csv, capsys):
    csv, t, y = toy_csv
    model = fit(tmp_path, csv, capsys, "log.toml", "--warping", "LOG")
    a, b = tmp_path / "s1.csv", tmp_path / "s2.csv"
    for out in (a, b):
        assert run(["sample", "--model", model, "--data", csv, "--n-paths", 7, "--seed", 4, "--out", out], capsys)[0] == 0
    assert a.read_text() == b.read_text()
    paths = np.loadtxt(a, delimiter=",", skiprows=1)
    assert paths.shape == (7, 25) and np.all(paths > 0)
    assert run(["sample", "--model", model, "--data", csv, "--noisy", "--out", b], capsys)[0] == 0
    assert a.read_text() != b.read_text()


def test_spec_file(tmp_path, toy_csv, capsys):
    csv, _, _ = toy_csv
    spec = tmp_path / "spec.toml"
    spec.write_text('[kernel]\nvariant = "se"\nparams = { variance = 1.0, lengthscale = 1.0 }\n'
                    'fixed = ["lengthscale"]\n\n[[warping]]\nvariant = "boxcox"\nparams = { lam = 0.5 }\n')
    m = fit(tmp_path, csv, capsys, "spec.toml.out", "--spec", spec)
    mf = load_model(m)
    assert mf.model.kernel.value("lengthscale") == 1.0 and mf.model.warping.code == "BC"
