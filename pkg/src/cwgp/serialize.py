"""TOML model files.

Layout::

    format = "cwgp-model/1"
    layer_order = "y->x"

    [mean]      variant, value, fixed
    [kernel]    variant, params, fixed
    [noise]     variance, fixed
    [[warping]] variant, params, fixed     (one block per layer, application order)
    [training]  feature_names, target_name, inputs, targets   (optional)
    [scaler]    mean, scale                                    (optional)

Floats are written with full repr precision, so a saved model reloads with
bit-identical parameter values.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli_w

from .data import Scaler
from .errors import DataError, InvalidParameter, UnsupportedVariant
from .kernels import KERNELS, ConstantMean
from .model import NoiseVariance, WarpedGP
from .warpings import ELEMENTARY, CompositeWarping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

FORMAT = "cwgp-model/1"


def _plain(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    return float(v)


def _record(obj, variant):
    return {"variant": variant, "params": {k: _plain(v) for k, v in obj.params.items()},
            "fixed": sorted(obj.fixed)}


def warping_records(warping) -> list:
    return [_record(layer, layer.variant) for layer in warping.layers]


def warping_from_records(records) -> CompositeWarping:
    layers = []
    for rec in records:
        variant = rec.get("variant", "").lower()
        if variant not in ELEMENTARY:
            raise UnsupportedVariant(f"unknown warping variant {variant!r}; known: {sorted(ELEMENTARY)}")
        cls = ELEMENTARY[variant]
        fixed = tuple(rec.get("fixed", ()))
        params = rec.get("params", {})
        layers.append(cls(**params, fixed=fixed) if params else cls.default())
    return CompositeWarping(layers)


@dataclass
class ModelFile:
    model: WarpedGP
    inputs: np.ndarray | None = None
    targets: np.ndarray | None = None
    feature_names: tuple = ()
    target_name: str = ""
    scaler: Scaler | None = None


def model_to_dict(model: WarpedGP, inputs=None, targets=None, feature_names=(), target_name="",
                  scaler=None) -> dict:
    doc = {
        "format": FORMAT,
        "layer_order": "y->x",
        "mean": {"variant": "constant", "value": model.mean.value("value"), "fixed": sorted(model.mean.fixed)},
        "kernel": _record(model.kernel, model.kernel.variant),
        "noise": {"variance": model.noise_var, "fixed": sorted(model.noise.fixed)},
        "warping": warping_records(model.warping),
    }
    if inputs is not None:
        doc["training"] = {
            "feature_names": list(feature_names),
            "target_name": target_name,
            "inputs": [[float(v) for v in row] for row in np.asarray(inputs, dtype=float)],
            "targets": [float(v) for v in np.ravel(targets)],
        }
    if scaler is not None:
        doc["scaler"] = {"mean": _plain(scaler.mean), "scale": _plain(scaler.scale)}
    return doc


def model_from_dict(doc) -> ModelFile:
    try:
        kernel_doc = doc["kernel"]
        variant = kernel_doc["variant"].lower()
        if variant not in KERNELS:
            raise UnsupportedVariant(f"unknown kernel variant {variant!r}; known: {sorted(KERNELS)}")
        kernel = KERNELS[variant](**kernel_doc.get("params", {}), fixed=tuple(kernel_doc.get("fixed", ())))
        mean_doc = doc.get("mean", {})
        mean = ConstantMean(mean_doc.get("value", 0.0), fixed=tuple(mean_doc.get("fixed", ())))
        noise_doc = doc.get("noise", {})
        noise = NoiseVariance(noise_doc.get("variance", 0.1), fixed=tuple(noise_doc.get("fixed", ())))
        warping = warping_from_records(doc.get("warping", []))
    except (KeyError, TypeError) as exc:
        raise InvalidParameter(f"malformed model record: {exc}") from exc
    out = ModelFile(WarpedGP(kernel, mean, warping=warping, noise=noise))
    train = doc.get("training")
    if train:
        out.inputs = np.asarray(train["inputs"], dtype=float).reshape(len(train["targets"]), -1)
        out.targets = np.asarray(train["targets"], dtype=float)
        out.feature_names = tuple(train.get("feature_names", ()))
        out.target_name = train.get("target_name", "")
    if "scaler" in doc:
        out.scaler = Scaler(np.asarray(doc["scaler"]["mean"], dtype=float),
                            np.asarray(doc["scaler"]["scale"], dtype=float))
    return out


def save_model(path, model: WarpedGP, **training):
    text = tomli_w.dumps(model_to_dict(model, **training))
    Path(path).write_text(text, encoding="utf-8")
    return text


def load_model(path) -> ModelFile:
    try:
        with Path(path).open("rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidParameter(f"model file {path} is not valid TOML: {exc}") from exc
    return model_from_dict(doc)
