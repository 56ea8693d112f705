"""Acceptance gate: one test per release criterion, each printing a PASS line.

Heavy fixtures (the frozen seed-42 datasets, the set-F models, and the full
learning-curve grid) are module-scoped so each expensive computation runs
once. Criterion 11 drives the CLI in subprocesses to check byte-level
reproducibility of the report files at --threads 1.
"""

import io
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from csibench.data import CsiSample, Dataset, read_csd, read_npy, write_csd, write_npy
from csibench.errors import CsiBenchError
from csibench.evalproto import (
    cross_env,
    evaluate,
    learning_curve,
    make_split,
    confusion_metrics,
    report_from_predictions,
    train_set_models,
)
from csibench.features import feature_matrix, standardize
from csibench.forest import TreeParams, best_split, fit_tree, gini
from csibench.cnn import grad_check, softmax
from csibench.lda import fit_lda
from csibench.models import train_model
from csibench.rng import make_generator
from csibench.svm import KernelSpec, kernel_eval, kernel_matrix, train_binary, dual_objective
from csibench.synth import default_envs, gen_dataset

from conftest import random_dataset
from forest_oracle import oracle_fit_tree, trees_equal
from svm_fixtures import SIX_POINT_FIXTURES, full_alphas, kkt_max_violation, oracle_dual_max
from test_evalproto import brute_force_metrics

SEED = 42


# -- shared heavy fixtures -----------------------------------------------------


@pytest.fixture(scope="module")
def datasets():
    env_a, env_b = default_envs()
    ds_a = gen_dataset(env_a, 2000, seed=SEED)
    ds_b = gen_dataset(env_b, 100, seed=SEED)
    return ds_a, ds_b


@pytest.fixture(scope="module")
def set_f(datasets):
    """Timed set-F training + validation evaluation for all five models."""
    ds_a, _ = datasets
    plan = make_split(ds_a, SEED)
    validation = ds_a.subset(plan.validation)
    t0 = time.perf_counter()
    models = train_set_models(ds_a, seed=SEED, set_name="F")
    reports = {kind: evaluate(model, validation) for kind, model in models.items()}
    elapsed = time.perf_counter() - t0
    return models, reports, elapsed


@pytest.fixture(scope="module")
def curve(datasets):
    ds_a, _ = datasets
    return learning_curve(ds_a, seed=SEED)


# -- criterion 1: format fidelity ----------------------------------------------


def _mutate(raw: bytes, rng) -> bytes:
    out = bytearray(raw)
    op = rng.integers(0, 4)
    if op == 0:
        return bytes(out[: rng.integers(0, len(out))])
    if op == 1:
        pos = int(rng.integers(0, len(out)))
        out[pos] = int(rng.integers(0, 256))
        return bytes(out)
    if op == 2:
        extra = rng.integers(0, 256, size=int(rng.integers(1, 64)), dtype=np.uint8)
        return bytes(out) + extra.tobytes()
    n = int(rng.integers(1, 200))
    return rng.integers(0, 256, size=n, dtype=np.uint8).tobytes()


def test_c01_format_fidelity():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    for i in range(1000):
        ds = random_dataset(rng, int(rng.integers(0, 4)), env=f"e{i % 7}")
        buf = io.BytesIO()
        write_csd(ds, buf)
        raw = buf.getvalue()
        buf.seek(0)
        back = read_csd(buf)
        assert back == ds
        check = io.BytesIO()
        write_csd(back, check)
        assert check.getvalue() == raw
        if len(ds):
            nbuf = io.BytesIO()
            write_npy(ds, nbuf)
            nbuf.seek(0)
            data, shape = read_npy(nbuf)
            assert shape[0] == len(ds)
            assert data.reshape(shape).tobytes() == ds.tensors().tobytes()

    csd_base = raw
    npy_buf = io.BytesIO()
    write_npy(random_dataset(rng, 2), npy_buf)
    npy_base = npy_buf.getvalue()
    crashes = 0
    for i in range(10_000):
        base = csd_base if i % 2 == 0 else npy_base
        mutated = _mutate(base, rng)
        try:
            if i % 2 == 0:
                read_csd(io.BytesIO(mutated))
            else:
                read_npy(io.BytesIO(mutated))
        except CsiBenchError:
            pass
        except Exception:  # anything untyped counts as a crash
            crashes += 1
    elapsed = time.perf_counter() - t0
    assert crashes == 0
    assert elapsed < 60.0, f"format suite took {elapsed:.1f}s"
    print(f"\nACCEPTANCE C1 format fidelity ({elapsed:.1f}s): PASS")


# -- criterion 2: exact arithmetic units ---------------------------------------


def test_c02_exact_arithmetic():
    assert gini([5, 5, 5]) == 2 / 3
    assert gini([10, 0, 0]) == 0.0
    rng = np.random.default_rng(SEED)
    spec_rbf = KernelSpec(kind="rbf", rbf_gamma=0.37)
    for _ in range(100):
        x = rng.normal(size=12)
        assert kernel_eval(spec_rbf, x, x) == 1.0
    lin = KernelSpec(kind="linear")
    poly = KernelSpec(kind="poly", poly_c=0.0, poly_d=1)
    for _ in range(1000):
        x, y = rng.normal(size=9), rng.normal(size=9)
        assert abs(kernel_eval(poly, x, y) - kernel_eval(lin, x, y)) < 1e-12
    print("\nACCEPTANCE C2 exact arithmetic units: PASS")


# -- criterion 3: LDA closed form -----------------------------------------------


def test_c03_lda_closed_form():
    offsets = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
    X = np.vstack([offsets + [1.0, 0.0], offsets + [-1.0, 0.0]])
    y = np.array([0] * 4 + [1] * 4)
    model = fit_lda(X, y)
    direction = model.weights[0] - model.weights[1]
    expected = np.linalg.solve(model.scatter, np.array([2.0, 0.0]))
    cos = direction @ expected / (np.linalg.norm(direction) * np.linalg.norm(expected))
    angle = float(np.arccos(np.clip(cos, -1.0, 1.0)))
    assert angle < 1e-8
    print(f"\nACCEPTANCE C3 LDA closed form (angular error {angle:.2e}): PASS")


# -- criterion 4: SVM against the dual oracle -----------------------------------


def test_c04_svm_oracle():
    worst_rel = 0.0
    for name, X, y, spec, C in SIX_POINT_FIXTURES:
        resolved = spec.resolved(X)
        K = kernel_matrix(resolved, X, X)
        machine = train_binary(X, y, spec, C=C, tol=1e-3, seed=5)
        smo_obj = dual_objective(K, y, full_alphas(machine, X))
        oracle_obj = oracle_dual_max(K, y, C)
        rel = abs(smo_obj - oracle_obj) / max(abs(oracle_obj), 1e-6)
        worst_rel = max(worst_rel, rel)
        assert rel <= 1e-3, f"{name}: SMO {smo_obj} vs oracle {oracle_obj}"
        assert kkt_max_violation(machine, X, y, C) <= 1e-3 + 1e-9, name

    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    machine = train_binary(X, y, KernelSpec(kind="rbf", rbf_gamma=1.0), C=10.0, seed=0)
    assert np.all(np.sign(machine.decision_values(X)) == y)
    print(f"\nACCEPTANCE C4 SVM dual oracle (worst rel err {worst_rel:.2e}): PASS")


# -- criterion 5: tree against the CART oracle ----------------------------------


def test_c05_tree_oracle():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    y = np.array([0, 0, 1, 1])
    feature, threshold, gain = best_split(X, y, [0])
    assert (feature, threshold) == (0, 5.5)
    assert gain == 0.5

    rng = np.random.default_rng(SEED)
    for trial in range(50):
        Xf = np.round(rng.normal(size=(6, 2)) * 2, 1)
        yf = rng.integers(0, 3, size=6)
        tree = fit_tree(Xf, yf, TreeParams(max_features=2))
        assert trees_equal(tree, oracle_fit_tree(Xf, yf)), f"fixture {trial}"
    print("\nACCEPTANCE C5 CART oracle (50 six-point fixtures): PASS")


# -- criterion 6: CNN gradients --------------------------------------------------


def test_c06_cnn_gradients():
    t0 = time.perf_counter()
    report = grad_check(tolerance=1e-4, seed=0, h=1e-5)
    assert report.passed, report.per_param
    rng = np.random.default_rng(SEED)
    rows = softmax(rng.normal(size=(200, 3)) * 7)
    assert np.max(np.abs(rows.sum(axis=1) - 1.0)) < 1e-12
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    print(
        f"\nACCEPTANCE C6 CNN gradients (max rel err {report.max_relative_error:.2e},"
        f" {elapsed:.1f}s): PASS"
    )


# -- criterion 7: metrics oracle -------------------------------------------------


def test_c07_metrics_oracle():
    rng = np.random.default_rng(SEED)
    for _ in range(1000):
        confusion = rng.integers(0, 40, size=(3, 3))
        if confusion.sum() == 0:
            continue
        ours = confusion_metrics(confusion)
        oracle = brute_force_metrics(confusion)
        assert abs(ours["accuracy"] - oracle["accuracy"]) < 1e-12
        for c in range(3):
            assert abs(ours["precision"][c] - oracle["precision"][c]) < 1e-12
            assert abs(ours["recall"][c] - oracle["recall"][c]) < 1e-12
            assert abs(ours["f1"][c] - oracle["f1"][c]) < 1e-12
    y_true = np.repeat(np.arange(3), 40)
    report = report_from_predictions(y_true, np.zeros(120, dtype=int), "const", "d")
    assert report.accuracy == 1 / 3
    print("\nACCEPTANCE C7 metrics oracle: PASS")


# -- criteria 8-10: frozen-generator benchmarks ----------------------------------


def test_c08_in_environment_headline(set_f):
    _models, reports, elapsed = set_f
    for kind in ("nbsvm", "cnn"):
        assert reports[kind].accuracy >= 0.85, f"{kind}: {reports[kind].accuracy:.3f}"
    for kind, report in reports.items():
        assert report.accuracy > 0.50, f"{kind}: {report.accuracy:.3f}"
    assert elapsed < 600.0, f"set-F train+eval took {elapsed:.0f}s"
    summary = ", ".join(f"{k}={reports[k].accuracy:.3f}" for k in sorted(reports))
    print(f"\nACCEPTANCE C8 in-environment headline ({elapsed:.0f}s; {summary}): PASS")


def test_c09_learning_curve_shape(curve):
    lines = []
    for kind in sorted({c.model_kind for c in curve.cells}):
        acc_a = curve.cell(kind, "A").report.accuracy
        acc_f = curve.cell(kind, "F").report.accuracy
        assert acc_f >= acc_a - 0.02, f"{kind}: A={acc_a:.3f} F={acc_f:.3f}"
        lines.append(f"{kind}: A={acc_a:.3f} F={acc_f:.3f}")
    print("\nACCEPTANCE C9 learning-curve shape (" + "; ".join(lines) + "): PASS")


def test_c10_cross_environment_collapse(datasets, set_f):
    ds_a, ds_b = datasets
    models, env_a_reports, _ = set_f
    reports = {r.model_id: r for r in cross_env(models, ds_b)}
    for kind, report in reports.items():
        assert report.accuracy <= 0.50, f"{kind}: {report.accuracy:.3f} in env B"
    for kind in ("nbsvm", "cnn"):
        drop = env_a_reports[kind].accuracy - reports[kind].accuracy
        assert drop >= 0.30, f"{kind} dropped only {drop:.3f}"

    # Label-shuffled control sits at chance on the 300-sample set.
    plan = make_split(ds_a, SEED)
    subset = ds_a.subset(plan.sets["F"])
    shuffled_labels = make_generator(123).permutation(subset.labels())
    shuffled_samples = [
        CsiSample(s.tensor, int(lbl)) for s, lbl in zip(subset.samples, shuffled_labels)
    ]
    control = train_model("lda", shuffled_samples, seed=SEED)
    control_acc = evaluate(control, ds_b).accuracy
    assert 1 / 3 - 0.08 <= control_acc <= 1 / 3 + 0.08, f"control at {control_acc:.3f}"
    summary = ", ".join(f"{k}={reports[k].accuracy:.3f}" for k in sorted(reports))
    print(
        f"\nACCEPTANCE C10 cross-environment collapse ({summary};"
        f" control={control_acc:.3f}): PASS"
    )


# -- criterion 11: bit-level reproducibility via the CLI -------------------------


def _run_cli(*argv):
    proc = subprocess.run(
        [sys.executable, "-m", "csibench.cli", "--threads", "1", *map(str, argv)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return proc


def _pipeline(root):
    root.mkdir()
    a = root / "envA.csd"
    b = root / "envB.csd"
    _run_cli("gen", "--env", "A", "--per-class", 2000, "--seed", SEED, "--out", a)
    _run_cli("gen", "--env", "B", "--per-class", 100, "--seed", SEED, "--out", b)
    _run_cli("curve", "--data", a, "--seed", SEED, "--out-prefix", root / "curve")
    _run_cli(
        "crossenv", "--data", a, "--envb", b, "--seed", SEED, "--out-prefix", root / "crossenv"
    )
    return {
        name: (root / name).read_bytes()
        for name in (
            "envA.csd",
            "envB.csd",
            "curve.json",
            "curve.csv",
            "crossenv.json",
            "crossenv.csv",
        )
    }


@pytest.mark.slow
def test_c11_single_thread_determinism(tmp_path):
    first = _pipeline(tmp_path / "run1")
    second = _pipeline(tmp_path / "run2")
    for name in first:
        assert first[name] == second[name], f"{name} differs between runs"
    payload = json.loads(first["curve.json"].decode())
    assert len(payload["cells"]) == 30
    print("\nACCEPTANCE C11 single-thread determinism: PASS")
