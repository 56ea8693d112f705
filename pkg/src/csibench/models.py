"""Uniform training, prediction, and serialization for the five classifiers.

A TrainedModel bundles the fitted classifier with its feature pipeline
(classical 270-vector + scaler, or the CNN input map) so a model file is
self-contained: load it and feed it raw samples. Files use the CSM1
container: magic "CSM1" | u8 kind code | u16 version | state payload.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from . import statecodec
from .cnn import CnnModel, TrainConfig
from .cnn import train as cnn_train
from .data import CsiSample
from .errors import DataError, FormatError, UnsupportedError
from .features import Scaler, feature_matrix, to_cnn_batch
from .forest import ForestModel, fit_forest, tree_from_arrays, tree_to_arrays
from .lda import LdaModel, fit_lda
from .nbsvm import GaussianNb, NbSvmModel, fit_nbsvm
from .rng import derive_seed
from .svm import BinarySvm, KernelSpec, MulticlassSvm, train_multiclass

MODEL_KINDS = ("lda", "nbsvm", "ksvm", "forest", "cnn")
_KIND_CODES = {k: i + 1 for i, k in enumerate(MODEL_KINDS)}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}

CSM_MAGIC = b"CSM1"
CSM_VERSION = 1

_PREDICT_CHUNK = 512


@dataclass
class TrainedModel:
    kind: str
    scaler: Scaler | None
    payload: object
    hyper: dict

    def predict_samples(self, samples: Sequence[CsiSample]) -> np.ndarray:
        """Posture codes for a sample sequence."""
        if self.kind == "cnn":
            x = to_cnn_batch(samples)
            out = [
                self.payload.predict(x[i : i + _PREDICT_CHUNK])
                for i in range(0, x.shape[0], _PREDICT_CHUNK)
            ]
            return np.concatenate(out)
        X = self.scaler.transform(feature_matrix(samples))
        return np.asarray(self.payload.predict(X), dtype=np.int64)


def _labels_of(samples: Sequence[CsiSample]) -> np.ndarray:
    return np.array([int(s.label) for s in samples], dtype=np.int64)


def train_model(
    kind: str, samples: Sequence[CsiSample], seed: int = 0, **hyper
) -> TrainedModel:
    """Train one of the five classifiers on labeled samples."""
    if kind not in MODEL_KINDS:
        raise DataError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
    if not samples:
        raise DataError("training needs a non-empty sample list")
    y = _labels_of(samples)

    if kind == "cnn":
        config = TrainConfig(
            epochs=int(hyper.pop("epochs", 30)),
            batch_size=int(hyper.pop("batch_size", 32)),
            learning_rate=float(hyper.pop("learning_rate", 1e-3)),
            momentum=float(hyper.pop("momentum", 0.9)),
            seed=derive_seed(seed, "cnn"),
            early_stop_loss=hyper.pop("early_stop_loss", 1e-2),
        )
        _reject_extras(hyper)
        x = to_cnn_batch(samples)
        model = CnnModel(seed=config.seed)
        model, history = cnn_train(model, x, y, config)
        resolved = {
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "momentum": config.momentum,
            "early_stop_loss": config.early_stop_loss,
            "epochs_run": len(history),
        }
        return TrainedModel(kind=kind, scaler=None, payload=model, hyper=resolved)

    X = feature_matrix(samples)
    scaler = Scaler.fit(X)
    Xs = scaler.transform(X)

    if kind == "lda":
        ridge = float(hyper.pop("ridge", 1e-6))
        _reject_extras(hyper)
        payload = fit_lda(Xs, y, ridge=ridge)
        resolved = {"ridge": ridge}
    elif kind == "nbsvm":
        c = float(hyper.pop("C", 1.0))
        tol = float(hyper.pop("tol", 1e-3))
        max_passes = int(hyper.pop("max_passes", 200))
        mode = str(hyper.pop("mode", "likelihood"))
        _reject_extras(hyper)
        payload = fit_nbsvm(
            Xs, y, seed=derive_seed(seed, "nbsvm"), C=c, tol=tol, max_passes=max_passes, mode=mode
        )
        resolved = {"C": c, "tol": tol, "max_passes": max_passes, "mode": mode}
    elif kind == "ksvm":
        kernel = str(hyper.pop("kernel", "rbf"))
        c = float(hyper.pop("C", 1.0))
        tol = float(hyper.pop("tol", 1e-3))
        max_passes = int(hyper.pop("max_passes", 200))
        gamma = hyper.pop("gamma", None)
        poly_c = float(hyper.pop("poly_c", 0.0))
        poly_d = int(hyper.pop("poly_d", 3))
        _reject_extras(hyper)
        spec = KernelSpec(
            kind=kernel,
            poly_c=poly_c,
            poly_d=poly_d,
            rbf_gamma=None if gamma is None else float(gamma),
        ).resolved(Xs)
        payload = train_multiclass(
            Xs, y, spec=spec, C=c, tol=tol, max_passes=max_passes, seed=derive_seed(seed, "ksvm")
        )
        resolved = {
            "kernel": kernel,
            "C": c,
            "tol": tol,
            "max_passes": max_passes,
            "gamma": spec.rbf_gamma,
            "poly_c": poly_c,
            "poly_d": poly_d,
        }
    else:  # forest
        n_trees = int(hyper.pop("n_trees", 100))
        max_features = hyper.pop("max_features", None)
        max_depth = hyper.pop("max_depth", None)
        min_samples_split = int(hyper.pop("min_samples_split", 2))
        bootstrap = bool(hyper.pop("bootstrap", True))
        _reject_extras(hyper)
        payload = fit_forest(
            Xs,
            y,
            n_trees=n_trees,
            max_features=None if max_features is None else int(max_features),
            max_depth=None if max_depth is None else int(max_depth),
            min_samples_split=min_samples_split,
            bootstrap=bootstrap,
            seed=derive_seed(seed, "forest"),
        )
        resolved = {
            "n_trees": n_trees,
            "max_features": max_features,
            "max_depth": max_depth,
            "min_samples_split": min_samples_split,
            "bootstrap": bootstrap,
        }
    return TrainedModel(kind=kind, scaler=scaler, payload=payload, hyper=resolved)


def _reject_extras(hyper: dict) -> None:
    if hyper:
        raise DataError(f"unknown hyperparameters: {sorted(hyper)}")


# -- state conversion ---------------------------------------------------------


def _scaler_state(scaler: Scaler | None):
    if scaler is None:
        return None
    return {"mean": scaler.mean, "scale": scaler.scale}


def _scaler_from(state) -> Scaler | None:
    if state is None:
        return None
    return Scaler(mean=state["mean"], scale=state["scale"])


def _spec_state(spec: KernelSpec) -> dict:
    return {
        "kind": spec.kind,
        "poly_c": spec.poly_c,
        "poly_d": spec.poly_d,
        "rbf_gamma": spec.rbf_gamma,
    }


def _spec_from(state: dict) -> KernelSpec:
    return KernelSpec(
        kind=state["kind"],
        poly_c=state["poly_c"],
        poly_d=int(state["poly_d"]),
        rbf_gamma=state["rbf_gamma"],
    )


def _binary_svm_state(m: BinarySvm) -> dict:
    return {
        "support_vectors": m.support_vectors,
        "coef": m.coef,
        "alphas": m.alphas,
        "sv_labels": m.sv_labels,
        "bias": m.bias,
        "spec": _spec_state(m.spec),
        "C": m.C,
    }


def _binary_svm_from(state: dict) -> BinarySvm:
    return BinarySvm(
        support_vectors=state["support_vectors"],
        coef=state["coef"],
        alphas=state["alphas"],
        sv_labels=state["sv_labels"],
        bias=float(state["bias"]),
        spec=_spec_from(state["spec"]),
        C=float(state["C"]),
    )


def _msvm_state(m: MulticlassSvm) -> dict:
    return {
        "machines": [_binary_svm_state(b) for b in m.machines],
        "pairs": [list(p) for p in m.pairs],
        "n_classes": m.n_classes,
    }


def _msvm_from(state: dict) -> MulticlassSvm:
    return MulticlassSvm(
        machines=tuple(_binary_svm_from(s) for s in state["machines"]),
        pairs=tuple((int(a), int(b)) for a, b in state["pairs"]),
        n_classes=int(state["n_classes"]),
    )


def _payload_state(kind: str, payload) -> dict:
    if kind == "lda":
        return {
            "classes": payload.classes,
            "means": payload.means,
            "scatter": payload.scatter,
            "weights": payload.weights,
            "biases": payload.biases,
            "priors": payload.priors,
        }
    if kind == "nbsvm":
        nb = payload.nb
        return {
            "nb": {
                "classes": nb.classes,
                "priors": nb.priors,
                "means": nb.means,
                "variances": nb.variances,
                "floor": nb.floor,
            },
            "svm": _msvm_state(payload.svm),
            "mode": payload.mode,
        }
    if kind == "ksvm":
        return _msvm_state(payload)
    if kind == "forest":
        return {
            "trees": [tree_to_arrays(t, payload.n_classes) for t in payload.trees],
            "n_classes": payload.n_classes,
            "seed": payload.seed,
            "bootstrap": payload.bootstrap,
            "oob_accuracy": payload.oob_accuracy,
        }
    if kind == "cnn":
        return payload.state()
    raise DataError(f"unknown model kind {kind!r}")


def _payload_from(kind: str, state: dict):
    if kind == "lda":
        return LdaModel(
            classes=state["classes"],
            means=state["means"],
            scatter=state["scatter"],
            weights=state["weights"],
            biases=state["biases"],
            priors=state["priors"],
        )
    if kind == "nbsvm":
        nbs = state["nb"]
        nb = GaussianNb(
            classes=nbs["classes"],
            priors=nbs["priors"],
            means=nbs["means"],
            variances=nbs["variances"],
            floor=float(nbs["floor"]),
        )
        return NbSvmModel(nb=nb, svm=_msvm_from(state["svm"]), mode=state["mode"])
    if kind == "ksvm":
        return _msvm_from(state)
    if kind == "forest":
        oob = state["oob_accuracy"]
        return ForestModel(
            trees=tuple(tree_from_arrays(t) for t in state["trees"]),
            n_classes=int(state["n_classes"]),
            seed=int(state["seed"]),
            bootstrap=bool(state["bootstrap"]),
            oob_accuracy=None if oob is None else float(oob),
        )
    if kind == "cnn":
        return CnnModel.from_state(state)
    raise DataError(f"unknown model kind {kind!r}")


def save_model(model: TrainedModel, sink: BinaryIO) -> int:
    """Write the CSM1 container; returns bytes written."""
    buf = io.BytesIO()
    statecodec.encode(
        {
            "scaler": _scaler_state(model.scaler),
            "hyper": model.hyper,
            "payload": _payload_state(model.kind, model.payload),
        },
        buf,
    )
    blob = (
        CSM_MAGIC
        + bytes([_KIND_CODES[model.kind]])
        + CSM_VERSION.to_bytes(2, "little")
        + buf.getvalue()
    )
    sink.write(blob)
    return len(blob)


def load_model(source: BinaryIO) -> TrainedModel:
    head = source.read(7)
    if len(head) < 7 or head[:4] != CSM_MAGIC:
        raise FormatError("not a CSM1 model file")
    kind_code = head[4]
    version = int.from_bytes(head[5:7], "little")
    if version != CSM_VERSION:
        raise UnsupportedError(f"CSM1 version {version} not supported")
    if kind_code not in _CODE_KINDS:
        raise FormatError(f"unknown model kind code {kind_code}")
    kind = _CODE_KINDS[kind_code]
    state = statecodec.decode(source)
    return TrainedModel(
        kind=kind,
        scaler=_scaler_from(state["scaler"]),
        payload=_payload_from(kind, state["payload"]),
        hyper=state["hyper"],
    )


def save_model_file(model: TrainedModel, path) -> int:
    with open(path, "wb") as fh:
        return save_model(model, fh)


def load_model_file(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return load_model(fh)
