"""CSV ingestion, seeded splits, feature standardisation and the bundled dataset registry."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidSpec, MissingColumn, ParseError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

REGISTRY_DIR = Path(__file__).resolve().parent / "datasets"


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    feature_names: tuple
    target_name: str
    dropped_rows: int = 0
    name: str = ""

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.targets.size:
            raise DataError("inputs must be an n x D matrix matching the targets")

    @property
    def n(self):
        return self.targets.size

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return replace(self, inputs=self.inputs[idx], targets=self.targets[idx], dropped_rows=0)


def _cell(text):
    text = text.strip()
    if not text:
        return None
    try:
        v = float(text)
    except ValueError:
        return None
    return v if np.isfinite(v) else None


def load_csv(path, target_column, delimiter=",", feature_columns=None, name="") -> Dataset:
    """Read a header-row CSV. Rows with an empty, non-numeric or non-finite cell are dropped."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path} is empty", row=0) from None
        if target_column not in header:
            raise MissingColumn(f"target column {target_column!r} not in {path.name} header {header}")
        if feature_columns is None:
            feature_columns = [h for h in header if h != target_column]
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise MissingColumn(f"feature column(s) {missing} not in {path.name} header")
        cols = [header.index(c) for c in feature_columns]
        tcol = header.index(target_column)
        rows, targets, dropped = [], [], 0
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise ParseError(
                    f"{path.name}: row {lineno} has {len(record)} fields, header has {len(header)}",
                    row=lineno, column=None,
                )
            vals = [_cell(record[j]) for j in cols]
            t = _cell(record[tcol])
            if t is None or any(v is None for v in vals):
                dropped += 1
                continue
            rows.append(vals)
            targets.append(t)
    if not targets:
        raise ParseError(f"{path.name} has no complete numeric rows", row=None)
    inputs = np.asarray(rows, dtype=float).reshape(len(targets), len(cols))
    if inputs.shape[1] == 0:
        raise DataError("need at least one feature column")
    return Dataset(inputs, np.asarray(targets, dtype=float), tuple(feature_columns), target_column,
                   dropped, name or path.stem)


def load_inputs(path, feature_columns, target_column=None, delimiter=","):
    """Feature matrix (and targets when ``target_column`` is present) for prediction.

    Unlike :func:`load_csv` nothing is dropped: an unusable cell is an error,
    because output rows must line up with input rows.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path} is empty", row=0) from None
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise MissingColumn(f"feature column(s) {missing} not in {path.name} header")
        cols = [header.index(c) for c in feature_columns]
        tcol = header.index(target_column) if target_column in header else None
        rows, targets = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise ParseError(f"{path.name}: row {lineno} has {len(record)} fields", row=lineno)
            vals = []
            for j in cols + ([tcol] if tcol is not None else []):
                v = _cell(record[j])
                if v is None:
                    raise ParseError(f"{path.name}: row {lineno}, column {header[j]!r}: "
                                     f"{record[j]!r} is not a finite number", row=lineno, column=header[j])
                vals.append(v)
            rows.append(vals[:len(cols)])
            if tcol is not None:
                targets.append(vals[-1])
    if not rows:
        raise ParseError(f"{path.name} has no data rows", row=None)
    inputs = np.asarray(rows, dtype=float)
    return inputs, (np.asarray(targets, dtype=float) if tcol is not None else None)


@dataclass(frozen=True)
class SplitSpec:
    """``train_n`` rows are drawn at random; a ``validation_fraction`` of them is held
    out for start selection, the rest is used for fitting. Rows outside the
    training draw form the test set."""

    train_n: int
    validation_fraction: float = 0.5
    seed: int = 0

    def validate(self, n):
        if not 1 <= self.train_n <= n:
            raise InvalidSpec(f"train_n={self.train_n} must lie in [1, {n}]")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise InvalidSpec("validation_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class Partition:
    train: Dataset
    validation: Dataset
    test: Dataset
    indices: dict = field(default_factory=dict)


def split(dataset: Dataset, spec: SplitSpec) -> Partition:
    spec.validate(dataset.n)
    perm = np.random.default_rng(spec.seed).permutation(dataset.n)
    drawn, test = perm[:spec.train_n], perm[spec.train_n:]
    n_val = int(round(spec.validation_fraction * spec.train_n))
    n_fit = spec.train_n - n_val
    if n_fit < 1:
        raise InvalidSpec("the fitting partition would be empty")
    fit_idx, val_idx = drawn[:n_fit], drawn[n_fit:]
    return Partition(dataset.subset(fit_idx), dataset.subset(val_idx), dataset.subset(test),
                     {"train": fit_idx, "validation": val_idx, "test": test})


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, inputs):
        return (np.asarray(inputs, dtype=float) - self.mean) / self.scale

    def inverse_transform(self, inputs):
        return np.asarray(inputs, dtype=float) * self.scale + self.mean


def fit_scaler(inputs) -> Scaler:
    inputs = np.asarray(inputs, dtype=float)
    mean = inputs.mean(axis=0)
    sd = inputs.std(axis=0)
    # constant features are only centred
    return Scaler(mean, np.where(sd < 1e-12, 1.0, sd))


def standardize_features(train: Dataset, *others: Dataset):
    """Standardise every set with statistics of ``train`` only; targets are untouched."""
    scaler = fit_scaler(train.inputs)
    out = [replace(d, inputs=scaler.transform(d.inputs)) for d in (train, *others)]
    return out, scaler


# ----------------------------------------------------------------------------
# registry


def read_meta(name):
    path = REGISTRY_DIR / name / "meta"
    if not path.is_file():
        raise DataError(f"unknown dataset {name!r}; available: {registered_names()}")
    with path.open("rb") as fh:
        return tomllib.load(fh)


def registered_names():
    return sorted(p.name for p in REGISTRY_DIR.iterdir() if (p / "meta").is_file())


def load_registered(name, data_path=None) -> Dataset:
    """Load a bundled dataset, or the same schema from ``data_path`` when given."""
    meta = read_meta(name)
    if data_path is None:
        if not meta.get("available", True):
            raise DataError(f"dataset {name!r} is not bundled: {meta.get('notes', '')}")
        data_path = REGISTRY_DIR / name / "data.csv"
    return load_csv(data_path, meta["target"], feature_columns=meta.get("inputs"), name=name)
