"""Splitting protocol, metrics, the learning-curve grid, and the
cross-environment benchmark.

Per class, 200 samples are held out for validation and the remaining pool
is ordered once; training subsets A..F are nested prefixes of sizes
300, 600, 900, 1200, 1500, 1800 per class. The learning curve trains each
of the five classifiers on each subset and scores it against the shared
validation split; the cross-environment benchmark reuses the largest-subset
models against a dataset captured in the other room.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import LABEL_NAMES, N_CLASSES, Dataset
from .errors import ProtocolError
from .models import MODEL_KINDS, TrainedModel, train_model
from .rng import derive_seed, make_generator

VALIDATION_PER_CLASS = 200
SET_NAMES = ("A", "B", "C", "D", "E", "F")
SET_SIZES_PER_CLASS = {"A": 300, "B": 600, "C": 900, "D": 1200, "E": 1500, "F": 1800}

REPORT_SCHEMA = 1

DEFAULT_MODEL_SPECS = tuple((kind, {}) for kind in MODEL_KINDS)


@dataclass(frozen=True)
class SplitPlan:
    validation: np.ndarray  # indices into the source dataset
    sets: dict[str, np.ndarray]  # set name -> training indices (nested)
    seed: int

    def check_no_leakage(self) -> None:
        val = set(self.validation.tolist())
        for name, idx in self.sets.items():
            overlap = val.intersection(idx.tolist())
            if overlap:
                raise ProtocolError(f"validation leaks into set {name}: {sorted(overlap)[:5]}")


def make_split(
    dataset: Dataset,
    seed: int,
    validation_per_class: int = VALIDATION_PER_CLASS,
    set_sizes: dict[str, int] | None = None,
) -> SplitPlan:
    """Per-class shuffle: first block validation, then nested prefix subsets."""
    sizes = dict(set_sizes) if set_sizes is not None else dict(SET_SIZES_PER_CLASS)
    labels = dataset.labels()
    needed = validation_per_class + max(sizes.values())
    per_class_pools: dict[int, np.ndarray] = {}
    for c in range(N_CLASSES):
        idx = np.flatnonzero(labels == c)
        if idx.size < needed:
            raise ProtocolError(
                f"class {LABEL_NAMES[c]} has {idx.size} samples; protocol needs {needed}"
            )
        order = make_generator(derive_seed(seed, "split", c)).permutation(idx.size)
        per_class_pools[c] = idx[order]
    validation = np.concatenate(
        [per_class_pools[c][:validation_per_class] for c in range(N_CLASSES)]
    )
    sets = {}
    for name in sorted(sizes, key=lambda n: sizes[n]):
        take = sizes[name]
        sets[name] = np.concatenate(
            [
                per_class_pools[c][validation_per_class : validation_per_class + take]
                for c in range(N_CLASSES)
            ]
        )
    plan = SplitPlan(validation=validation, sets=sets, seed=seed)
    plan.check_no_leakage()
    return plan


@dataclass(frozen=True)
class EvalReport:
    model_id: str
    dataset_id: str
    confusion: np.ndarray  # (3, 3), rows = truth
    n: int
    accuracy: float
    precision: np.ndarray  # per class
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float

    def to_dict(self) -> dict:
        return {
            "model": self.model_id,
            "dataset": self.dataset_id,
            "n": self.n,
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "precision": {LABEL_NAMES[c]: self.precision[c] for c in range(N_CLASSES)},
            "recall": {LABEL_NAMES[c]: self.recall[c] for c in range(N_CLASSES)},
            "f1": {LABEL_NAMES[c]: self.f1[c] for c in range(N_CLASSES)},
            "macro_f1": self.macro_f1,
        }


def confusion_metrics(confusion: np.ndarray) -> dict:
    """Accuracy and per-class precision/recall/F1; zero denominators yield 0."""
    confusion = np.asarray(confusion, dtype=np.int64)
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    precision = np.zeros(N_CLASSES)
    recall = np.zeros(N_CLASSES)
    f1 = np.zeros(N_CLASSES)
    for c in range(N_CLASSES):
        tp = confusion[c, c]
        predicted = confusion[:, c].sum()
        actual = confusion[c, :].sum()
        precision[c] = tp / predicted if predicted else 0.0
        recall[c] = tp / actual if actual else 0.0
        denom = precision[c] + recall[c]
        f1[c] = 2.0 * precision[c] * recall[c] / denom if denom else 0.0
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "macro_f1": float(f1.mean()),
    }


def report_from_predictions(
    y_true: np.ndarray, y_pred: np.ndarray, model_id: str, dataset_id: str
) -> EvalReport:
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for t, p in zip(np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)):
        confusion[t, p] += 1
    m = confusion_metrics(confusion)
    return EvalReport(
        model_id=model_id,
        dataset_id=dataset_id,
        confusion=confusion,
        n=int(confusion.sum()),
        accuracy=m["accuracy"],
        precision=m["precision"],
        recall=m["recall"],
        f1=m["f1"],
        macro_f1=m["macro_f1"],
    )


def evaluate(model: TrainedModel, dataset: Dataset, dataset_id: str | None = None) -> EvalReport:
    """Score a trained model on every sample of a dataset."""
    y_pred = model.predict_samples(dataset.samples)
    return report_from_predictions(
        dataset.labels(),
        y_pred,
        model_id=model.kind,
        dataset_id=dataset_id if dataset_id is not None else dataset.environment_id,
    )


@dataclass(frozen=True)
class CurveCell:
    model_kind: str
    set_name: str
    report: EvalReport
    train_seconds: float


@dataclass(frozen=True)
class CurveResult:
    cells: tuple[CurveCell, ...]
    set_f_models: dict[str, TrainedModel] = field(compare=False)
    seed: int = 0
    environment_id: str = ""

    def cell(self, model_kind: str, set_name: str) -> CurveCell:
        for c in self.cells:
            if c.model_kind == model_kind and c.set_name == set_name:
                return c
        raise KeyError((model_kind, set_name))


def learning_curve(
    dataset: Dataset,
    seed: int,
    specs: Sequence[tuple[str, dict]] = DEFAULT_MODEL_SPECS,
    validation_per_class: int = VALIDATION_PER_CLASS,
    set_sizes: dict[str, int] | None = None,
) -> CurveResult:
    """Train every (model, subset) cell and score it on the shared validation
    split. The largest subset's models are kept for cross-environment use."""
    plan = make_split(
        dataset, seed, validation_per_class=validation_per_class, set_sizes=set_sizes
    )
    plan.check_no_leakage()
    validation = dataset.subset(plan.validation)
    largest = max(plan.sets, key=lambda n: len(plan.sets[n]))
    cells = []
    keep: dict[str, TrainedModel] = {}
    for kind, hyper in specs:
        for set_name in sorted(plan.sets, key=lambda n: len(plan.sets[n])):
            train_samples = dataset.subset(plan.sets[set_name]).samples
            t0 = time.perf_counter()
            model = train_model(
                kind, train_samples, seed=derive_seed(seed, "train", kind, set_name), **hyper
            )
            dt = time.perf_counter() - t0
            report = evaluate(
                model, validation, dataset_id=f"{dataset.environment_id}/validation"
            )
            cells.append(
                CurveCell(model_kind=kind, set_name=set_name, report=report, train_seconds=dt)
            )
            if set_name == largest:
                keep[kind] = model
    return CurveResult(
        cells=tuple(cells),
        set_f_models=keep,
        seed=seed,
        environment_id=dataset.environment_id,
    )


def train_set_models(
    dataset: Dataset,
    seed: int,
    set_name: str = "F",
    specs: Sequence[tuple[str, dict]] = DEFAULT_MODEL_SPECS,
) -> dict[str, TrainedModel]:
    """Train the five models on one protocol subset (seeded like the curve)."""
    plan = make_split(dataset, seed)
    train_samples = dataset.subset(plan.sets[set_name]).samples
    return {
        kind: train_model(
            kind, train_samples, seed=derive_seed(seed, "train", kind, set_name), **hyper
        )
        for kind, hyper in specs
    }


def cross_env(
    models: dict[str, TrainedModel], env_b_data: Dataset
) -> list[EvalReport]:
    """Evaluate largest-subset models on the other environment's samples."""
    return [
        evaluate(models[kind], env_b_data, dataset_id=env_b_data.environment_id)
        for kind in models
    ]


# -- report files --------------------------------------------------------------

_CSV_COLUMNS = (
    ["model", "set", "dataset", "n", "accuracy", "macro_f1"]
    + [f"precision_{name}" for name in LABEL_NAMES]
    + [f"recall_{name}" for name in LABEL_NAMES]
    + [f"f1_{name}" for name in LABEL_NAMES]
    + [f"confusion_{LABEL_NAMES[t]}_{LABEL_NAMES[p]}" for t in range(3) for p in range(3)]
)


def _cell_row(model: str, set_name: str, report: EvalReport) -> list:
    return (
        [model, set_name, report.dataset_id, report.n, report.accuracy, report.macro_f1]
        + [report.precision[c] for c in range(3)]
        + [report.recall[c] for c in range(3)]
        + [report.f1[c] for c in range(3)]
        + [int(report.confusion[t, p]) for t in range(3) for p in range(3)]
    )


def write_curve_reports(result: CurveResult, json_path, csv_path) -> None:
    payload = {
        "schema": REPORT_SCHEMA,
        "kind": "learning_curve",
        "environment": result.environment_id,
        "seed": result.seed,
        # Timings stay in memory; files must be byte-identical across reruns.
        "cells": [{"set": c.set_name, **c.report.to_dict()} for c in result.cells],
    }
    _write_json(payload, json_path)
    _write_csv(
        [_cell_row(c.model_kind, c.set_name, c.report) for c in result.cells], csv_path
    )


def write_eval_reports(
    reports: Sequence[EvalReport], json_path, csv_path, kind: str = "evaluation", seed: int = 0
) -> None:
    payload = {
        "schema": REPORT_SCHEMA,
        "kind": kind,
        "seed": seed,
        "reports": [r.to_dict() for r in reports],
    }
    _write_json(payload, json_path)
    _write_csv([_cell_row(r.model_id, "F", r) for r in reports], csv_path)


def _write_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(rows: list[list], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        writer.writerows(rows)
