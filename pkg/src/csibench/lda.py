"""Multi-class linear discriminant analysis with a shared covariance.

Per-class linear scores delta_c(x) = w_c . x + w0_c with
w_c = S^-1 mu_c and w0_c = -0.5 mu_c . S^-1 mu_c + log prior_c, where S is
the ridge-stabilized pooled within-class covariance. For two classes this
reduces to the classic discriminant direction S^-1 (mu_1 - mu_2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateDataError

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class LdaModel:
    classes: np.ndarray  # original integer labels, ascending
    means: np.ndarray  # (K, d)
    scatter: np.ndarray  # (d, d) regularized pooled covariance
    weights: np.ndarray  # (K, d) rows S^-1 mu_c
    biases: np.ndarray  # (K,)
    priors: np.ndarray  # (K,)

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.weights.T + self.biases

    def predict(self, X: np.ndarray) -> np.ndarray:
        scores = self.decision_scores(X)
        return self.classes[np.argmax(scores, axis=1)]


def _spd_solve(S: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve S X = B via Cholesky; S must be symmetric positive definite."""
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise DataError(f"pooled scatter is not positive definite: {exc}") from exc
    Y = np.linalg.solve(L, B)
    return np.linalg.solve(L.T, Y)


def fit_lda(X: np.ndarray, y: np.ndarray, ridge: float = DEFAULT_RIDGE) -> LdaModel:
    """Fit Gaussian discriminants with a pooled within-class covariance."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise DataError("features contain non-finite values")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateDataError("LDA needs at least two classes")
    n, d = X.shape
    means = np.empty((classes.size, d))
    priors = np.empty(classes.size)
    scatter = np.zeros((d, d))
    for i, c in enumerate(classes):
        Xc = X[y == c]
        if Xc.shape[0] < 2:
            raise DegenerateDataError(f"class {c} has {Xc.shape[0]} samples; need >= 2")
        means[i] = Xc.mean(axis=0)
        priors[i] = Xc.shape[0] / n
        centered = Xc - means[i]
        scatter += centered.T @ centered
    scatter /= n - classes.size
    if ridge:
        level = scatter.trace() / d
        if level <= 0.0:
            level = 1.0
        scatter = scatter + ridge * level * np.eye(d)
    weights = _spd_solve(scatter, means.T).T
    biases = -0.5 * np.einsum("kd,kd->k", means, weights) + np.log(priors)
    return LdaModel(
        classes=classes,
        means=means,
        scatter=scatter,
        weights=weights,
        biases=biases,
        priors=priors,
    )


def predict_lda(model: LdaModel, X: np.ndarray) -> np.ndarray:
    """Argmax of the class scores; ties resolve to the lowest class."""
    return model.predict(X)
