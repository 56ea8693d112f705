"""Gaussian naive Bayes feature preprocessing feeding a linear SVM.

Stage 1 fits per-feature per-class Gaussians. Stage 2 maps each input
feature to its three class log-likelihoods (shifted per feature so the best
class sits at 0), tripling the dimension. Stage 3 classifies the expanded
vectors with a linear one-vs-one SVM. A compact variant that feeds the
three class posteriors instead is available via mode="posterior".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateDataError
from .svm import DEFAULT_C, DEFAULT_MAX_PASSES, DEFAULT_TOL, KernelSpec, MulticlassSvm, train_multiclass

_LOG_2PI = float(np.log(2.0 * np.pi))
VARIANCE_FLOOR_RATIO = 1e-9


@dataclass(frozen=True)
class GaussianNb:
    classes: np.ndarray  # (K,) original labels, ascending
    priors: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    variances: np.ndarray  # (K, d), floored
    floor: float


def fit_nb(X: np.ndarray, y: np.ndarray) -> GaussianNb:
    """Per-feature per-class Gaussian maximum likelihood with a variance floor."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise DataError("features contain non-finite values")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateDataError("naive Bayes needs at least two classes")
    n, d = X.shape
    global_var = float(X.var(axis=0).max())
    floor = VARIANCE_FLOOR_RATIO * global_var if global_var > 0 else VARIANCE_FLOOR_RATIO
    means = np.empty((classes.size, d))
    variances = np.empty((classes.size, d))
    priors = np.empty(classes.size)
    for i, c in enumerate(classes):
        Xc = X[y == c]
        if Xc.shape[0] < 2:
            raise DegenerateDataError(f"class {c} has {Xc.shape[0]} samples; need >= 2")
        means[i] = Xc.mean(axis=0)
        variances[i] = np.maximum(Xc.var(axis=0), floor)
        priors[i] = Xc.shape[0] / n
    return GaussianNb(classes=classes, priors=priors, means=means, variances=variances, floor=floor)


def _per_feature_log_likelihoods(nb: GaussianNb, X: np.ndarray) -> np.ndarray:
    """log N(x_f; mu_{f,k}, var_{f,k}) with shape (n, d, K)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    diff = X[:, :, None] - nb.means.T[None, :, :]  # (n, d, K)
    var = nb.variances.T[None, :, :]
    return -0.5 * (_LOG_2PI + np.log(var) + diff * diff / var)


def class_log_scores(nb: GaussianNb, X: np.ndarray) -> np.ndarray:
    """Unnormalized log posteriors: sum of feature log densities + log prior."""
    return _per_feature_log_likelihoods(nb, X).sum(axis=1) + np.log(nb.priors)[None, :]


def nb_posterior(nb: GaussianNb, x: np.ndarray) -> np.ndarray:
    """Class posterior probabilities, computed in log space."""
    scores = class_log_scores(nb, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    shifted = scores - scores.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    return p[0] if np.asarray(x).ndim == 1 else p


def nb_transform(nb: GaussianNb, X: np.ndarray) -> np.ndarray:
    """Per-feature class log-likelihoods, shifted so each feature's best class
    is 0; output column 3f + k holds feature f, class k."""
    ll = _per_feature_log_likelihoods(nb, X)  # (n, d, K)
    ll = ll - ll.max(axis=2, keepdims=True)
    n, d, k = ll.shape
    out = ll.reshape(n, d * k)
    return out[0] if np.asarray(X).ndim == 1 else out


def nb_predict(nb: GaussianNb, X: np.ndarray) -> np.ndarray:
    scores = class_log_scores(nb, X)
    return nb.classes[np.argmax(scores, axis=1)]


@dataclass(frozen=True)
class NbSvmModel:
    nb: GaussianNb
    svm: MulticlassSvm
    mode: str  # "likelihood" (3d features) or "posterior" (3 features)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.mode == "posterior":
            return nb_posterior(self.nb, X)
        return nb_transform(self.nb, X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.svm.predict(self.transform(X))


def fit_nbsvm(
    X: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    mode: str = "likelihood",
) -> NbSvmModel:
    """Fit NB, expand the training features, train the linear-kernel SVM."""
    if mode not in ("likelihood", "posterior"):
        raise DataError(f"unknown NB-SVM mode {mode!r}")
    nb = fit_nb(X, y)
    if mode == "posterior":
        Z = nb_posterior(nb, X)
    else:
        Z = nb_transform(nb, X)
    svm = train_multiclass(
        Z,
        np.asarray(y, dtype=np.int64),
        spec=KernelSpec(kind="linear"),
        C=C,
        tol=tol,
        max_passes=max_passes,
        seed=seed,
    )
    return NbSvmModel(nb=nb, svm=svm, mode=mode)


def predict_nbsvm(model: NbSvmModel, X: np.ndarray) -> np.ndarray:
    return model.predict(X)
