"""Soft-margin kernel SVM trained by sequential minimal optimization.

The binary machine maximizes the dual
    sum_i a_i - 0.5 sum_ij a_i a_j y_i y_j K(x_i, x_j)
subject to 0 <= a_i <= C and sum_i a_i y_i = 0, by pairwise coordinate
ascent with a maintained error cache. Multi-class prediction is one-vs-one
majority voting over the three class pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, DegenerateDataError, DimensionError
from .rng import derive_seed, make_generator

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 200
_STEP_EPS = 1e-8
FULL_GRAM_LIMIT = 6000


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selection: 'linear', 'poly' (x.y + c)^d, or 'rbf' exp(-g |x-y|^2)."""

    kind: str = "rbf"
    poly_c: float = 0.0
    poly_d: int = 3
    rbf_gamma: float | None = None  # None -> scale heuristic at fit time

    def __post_init__(self):
        if self.kind not in ("linear", "poly", "rbf"):
            raise DataError(f"unknown kernel kind {self.kind!r}")
        if self.poly_d < 1:
            raise DataError("polynomial degree must be >= 1")
        if self.rbf_gamma is not None and not self.rbf_gamma > 0:
            raise DataError("rbf gamma must be > 0")

    def resolved(self, X: np.ndarray) -> "KernelSpec":
        """Fill the RBF gamma from 1 / (dims * mean feature variance)."""
        if self.kind != "rbf" or self.rbf_gamma is not None:
            return self
        var = float(np.asarray(X, dtype=np.float64).var(axis=0).mean())
        gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        return replace(self, rbf_gamma=gamma)


def kernel_eval(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    """Kernel value for two vectors of equal length."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError(f"kernel operands disagree: {x.shape} vs {y.shape}")
    if spec.kind == "rbf":
        if spec.rbf_gamma is None:
            raise DataError("rbf gamma unresolved; call spec.resolved(X) first")
        diff = x - y  # exact zero for identical inputs, so K(x, x) == 1.0
        return float(np.exp(-spec.rbf_gamma * (diff @ diff)))
    return float(kernel_matrix(spec, x[None, :], y[None, :])[0, 0])


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Gram block K[i, j] = K(A[i], B[j])."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"feature dims disagree: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "linear":
        return A @ B.T
    if spec.kind == "poly":
        return (A @ B.T + spec.poly_c) ** spec.poly_d
    if spec.rbf_gamma is None:
        raise DataError("rbf gamma unresolved; call spec.resolved(X) first")
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    if A is B:
        np.fill_diagonal(sq, 0.0)  # keep K(x, x) exactly 1
    return np.exp(-spec.rbf_gamma * sq)


@dataclass(frozen=True)
class BinarySvm:
    """Trained binary machine; decision f(x) = sum coef_i K(sv_i, x) + bias."""

    support_vectors: np.ndarray  # (m, d)
    coef: np.ndarray  # (m,) = alpha_i * y_i
    alphas: np.ndarray  # (m,)
    sv_labels: np.ndarray  # (m,) in {-1, +1}
    bias: float
    spec: KernelSpec
    C: float

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        K = kernel_matrix(self.spec, X, self.support_vectors)
        return K @ self.coef + self.bias


def decision_value(machine: BinarySvm, x: np.ndarray) -> float:
    return float(machine.decision_values(np.asarray(x)[None, :])[0])


class _GramCache:
    """Full Gram matrix when it fits, otherwise an LRU row cache."""

    def __init__(self, spec: KernelSpec, X: np.ndarray, limit: int = FULL_GRAM_LIMIT):
        self.spec = spec
        self.X = X
        n = X.shape[0]
        self.full = None
        if n <= limit:
            self.full = kernel_matrix(spec, X, X)
        else:
            self._rows: dict[int, np.ndarray] = {}
            self._max_rows = max(64, (limit * limit) // max(n, 1))

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        cached = self._rows.get(i)
        if cached is None:
            cached = kernel_matrix(self.spec, self.X[i : i + 1], self.X)[0]
            if len(self._rows) >= self._max_rows:
                self._rows.pop(next(iter(self._rows)))
            self._rows[i] = cached
        return cached

    def diag(self, i: int) -> float:
        return float(self.row(i)[i])


def train_binary(
    X: np.ndarray,
    y: np.ndarray,
    spec: KernelSpec | None = None,
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    seed: int = 0,
) -> BinarySvm:
    """SMO training of the soft-margin dual for labels in {-1, +1}."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("X must be (n, d) with one label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("binary labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise DegenerateDataError("both classes must be present")
    if C <= 0:
        raise DataError("C must be > 0")
    spec = (spec or KernelSpec()).resolved(X)

    n = X.shape[0]
    gram = _GramCache(spec, X)
    alphas = np.zeros(n)
    bias = 0.0
    errors = -y.copy()  # f(x) = 0 initially, E_i = f(x_i) - y_i
    rng = make_generator(derive_seed(seed, "smo"))

    def take_step(i1: int, i2: int) -> bool:
        nonlocal bias, errors
        if i1 == i2:
            return False
        a1, a2 = alphas[i1], alphas[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        else:
            lo, hi = max(0.0, a2 - a1), min(C, C + a2 - a1)
        if lo >= hi:
            return False
        k11 = gram.diag(i1)
        k22 = gram.diag(i2)
        k12 = float(gram.row(i1)[i2])
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, lo), hi)
        else:
            # Flat or concave direction: evaluate the dual at both clip ends
            # and move to the larger one. v_i isolates the fixed contribution
            # of all other multipliers to f(x_i).
            f1 = e1 + y1
            f2 = e2 + y2
            v1 = f1 - bias - y1 * a1 * k11 - y2 * a2 * k12
            v2 = f2 - bias - y1 * a1 * k12 - y2 * a2 * k22

            def dual_at(a2t: float) -> float:
                a1t = a1 + s * (a2 - a2t)
                return (
                    a1t
                    + a2t
                    - 0.5 * k11 * a1t * a1t
                    - 0.5 * k22 * a2t * a2t
                    - s * k12 * a1t * a2t
                    - y1 * a1t * v1
                    - y2 * a2t * v2
                )

            w_lo, w_hi = dual_at(lo), dual_at(hi)
            if w_lo > w_hi + _STEP_EPS:
                a2_new = lo
            elif w_hi > w_lo + _STEP_EPS:
                a2_new = hi
            else:
                return False
        if abs(a2_new - a2) < _STEP_EPS * (a2_new + a2 + _STEP_EPS):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        d1 = y1 * (a1_new - a1)
        d2 = y2 * (a2_new - a2)
        if 0.0 < a1_new < C:
            delta_b = -e1 - d1 * k11 - d2 * k12
        elif 0.0 < a2_new < C:
            delta_b = -e2 - d1 * k12 - d2 * k22
        else:
            b1 = -e1 - d1 * k11 - d2 * k12
            b2 = -e2 - d1 * k12 - d2 * k22
            delta_b = 0.5 * (b1 + b2)
        alphas[i1] = a1_new
        alphas[i2] = a2_new
        errors += d1 * gram.row(i1) + d2 * gram.row(i2) + delta_b
        bias += delta_b
        return True

    def examine(i2: int) -> bool:
        y2, a2, e2 = y[i2], alphas[i2], errors[i2]
        r2 = e2 * y2
        if not ((r2 < -tol and a2 < C) or (r2 > tol and a2 > 0)):
            return False
        non_bound = np.flatnonzero((alphas > 0) & (alphas < C))
        if non_bound.size > 1:
            gaps = np.abs(errors[non_bound] - e2)
            i1 = int(non_bound[np.argmax(gaps)])
            if take_step(i1, i2):
                return True
        if non_bound.size:
            start = int(rng.integers(non_bound.size))
            for k in range(non_bound.size):
                if take_step(int(non_bound[(start + k) % non_bound.size]), i2):
                    return True
        start = int(rng.integers(n))
        for k in range(n):
            if take_step((start + k) % n, i2):
                return True
        return False

    examine_all = True
    sweeps = 0
    while sweeps < max_passes:
        changed = 0
        targets = range(n) if examine_all else np.flatnonzero((alphas > 0) & (alphas < C))
        for i2 in targets:
            changed += examine(int(i2))
        sweeps += 1
        if examine_all:
            if changed == 0:
                break  # every sample satisfies KKT within tol
            examine_all = False
        elif changed == 0:
            examine_all = True

    keep = alphas > 1e-12
    return BinarySvm(
        support_vectors=X[keep].copy(),
        coef=(alphas * y)[keep],
        alphas=alphas[keep].copy(),
        sv_labels=y[keep].copy(),
        bias=bias,
        spec=spec,
        C=C,
    )


def dual_objective(K: np.ndarray, y: np.ndarray, alphas: np.ndarray) -> float:
    """Value of the SVM dual for a full alpha vector over the Gram matrix."""
    ay = alphas * y
    return float(alphas.sum() - 0.5 * ay @ K @ ay)


CLASS_PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class MulticlassSvm:
    """One-vs-one ensemble over the three posture class pairs."""

    machines: tuple[BinarySvm, ...]  # aligned with `pairs`
    pairs: tuple[tuple[int, int], ...]
    n_classes: int = 3

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n = X.shape[0]
        votes = np.zeros((n, self.n_classes), dtype=np.int64)
        margins = np.zeros((n, self.n_classes))
        for (a, b), machine in zip(self.pairs, self.machines):
            f = machine.decision_values(X)
            pick_a = f >= 0.0
            votes[pick_a, a] += 1
            votes[~pick_a, b] += 1
            margins[pick_a, a] += np.abs(f[pick_a])
            margins[~pick_a, b] += np.abs(f[~pick_a])
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            best = votes[i].max()
            tied = np.flatnonzero(votes[i] == best)
            if tied.size == 1:
                out[i] = tied[0]
                continue
            tied_margins = margins[i, tied]
            out[i] = int(tied[np.argmax(tied_margins)])  # argmax: lowest index on ties
        return out


def train_multiclass(
    X: np.ndarray,
    y: np.ndarray,
    spec: KernelSpec | None = None,
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    seed: int = 0,
) -> MulticlassSvm:
    """Train the three one-vs-one machines on classes {0, 1, 2}."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    present = np.unique(y)
    if not np.all(np.isin(present, (0, 1, 2))):
        raise DataError("labels must be in {0, 1, 2}")
    if present.size < 3:
        raise DegenerateDataError(f"all three classes required, found {present.tolist()}")
    spec = (spec or KernelSpec()).resolved(X)
    machines = []
    for a, b in CLASS_PAIRS:
        mask = (y == a) | (y == b)
        yy = np.where(y[mask] == a, 1.0, -1.0)
        machines.append(
            train_binary(
                X[mask],
                yy,
                spec=spec,
                C=C,
                tol=tol,
                max_passes=max_passes,
                seed=derive_seed(seed, "ovo", a, b),
            )
        )
    return MulticlassSvm(machines=tuple(machines), pairs=CLASS_PAIRS)


def predict_multiclass(model: MulticlassSvm, X: np.ndarray) -> np.ndarray:
    return model.predict(X)
