"""Gini-impurity decision trees and a bagged random forest.

Splits maximize the impurity decrease
    gini(parent) - sum_j (N_j / N) * gini(child_j)
over candidate features and midpoints between consecutive distinct sorted
values; ties go to the lowest feature index, then the lowest threshold.
Each forest tree trains on its own bootstrap draw from a per-tree seed, so
training order cannot change the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DataError, DegenerateDataError
from .rng import derive_seed, make_generator

DEFAULT_N_TREES = 100
DEFAULT_MIN_SAMPLES_SPLIT = 2


def gini(class_counts) -> float:
    """1 - sum p_i^2 over class proportions at a node.

    Computed as (n^2 - sum c_i^2) / n^2 with exact integer numerators, so
    rational values like 2/3 come out exactly rounded.
    """
    counts = np.asarray(class_counts)
    if np.any(counts < 0):
        raise DataError("class counts must be non-negative")
    total = int(counts.sum())
    if total <= 0:
        raise DataError("gini undefined for an empty node")
    square_sum = int(np.sum(counts.astype(np.int64) ** 2))
    return (total * total - square_sum) / (total * total)


@dataclass(frozen=True, eq=False)
class Leaf:
    counts: np.ndarray  # per-class sample counts at the leaf
    label: int  # majority class, ties to the lowest index


@dataclass(frozen=True, eq=False)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    candidate_features,
    n_classes: int = 3,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, impurity decrease), or None if no split helps."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    parent_counts = np.bincount(y, minlength=n_classes)
    parent_gini = gini(parent_counts)
    total = parent_counts.astype(np.float64)

    best: tuple[int, float, float] | None = None
    for f in sorted(int(f) for f in candidate_features):
        v = X[:, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        one_hot = np.zeros((n, n_classes))
        one_hot[np.arange(n), y[order]] = 1.0
        prefix = np.cumsum(one_hot, axis=0)  # prefix[i] = counts of first i+1
        cut = np.flatnonzero(sv[:-1] != sv[1:])  # split after position i
        if cut.size == 0:
            continue
        left = prefix[cut]
        nl = left.sum(axis=1)
        nr = n - nl
        right = total[None, :] - left
        gl = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
        gr = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
        gains = parent_gini - (nl / n) * gl - (nr / n) * gr
        k = int(np.argmax(gains))  # first max: lowest threshold wins ties
        if gains[k] <= 0.0:
            continue
        lo, hi = sv[cut[k]], sv[cut[k] + 1]
        threshold = 0.5 * (lo + hi)
        if threshold >= hi:  # midpoint rounded up to the right value
            threshold = lo
        if best is None or gains[k] > best[2]:
            best = (f, float(threshold), float(gains[k]))
    return best


@dataclass(frozen=True)
class TreeParams:
    n_classes: int = 3
    max_features: int | None = None  # None -> all features
    max_depth: int | None = None
    min_samples_split: int = DEFAULT_MIN_SAMPLES_SPLIT


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: TreeParams = TreeParams(),
    rng: np.random.Generator | None = None,
) -> TreeNode:
    """Grow a tree by recursive best splits over random feature subsets."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise DataError("X must be non-empty (n, d) with one label per row")
    d = X.shape[1]
    k = params.max_features if params.max_features is not None else d
    if not 1 <= k <= d:
        raise DataError(f"max_features must be in [1, {d}]")
    rng = rng or make_generator(0)

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        counts = np.bincount(y[idx], minlength=params.n_classes)
        label = int(np.argmax(counts))
        if (
            np.count_nonzero(counts) <= 1
            or idx.size < params.min_samples_split
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            return Leaf(counts=counts, label=label)
        if k >= d:
            candidates = np.arange(d)
        else:
            candidates = np.sort(rng.permutation(d)[:k])
        found = best_split(X[idx], y[idx], candidates, params.n_classes)
        if found is None:
            return Leaf(counts=counts, label=label)
        f, threshold, _gain = found
        mask = X[idx, f] <= threshold
        return Split(
            feature=f,
            threshold=threshold,
            left=grow(idx[mask], depth + 1),
            right=grow(idx[~mask], depth + 1),
        )

    return grow(np.arange(X.shape[0]), 0)


def predict_tree(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Route rows down the tree with vectorized masks."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.empty(X.shape[0], dtype=np.int64)

    def walk(n: TreeNode, idx: np.ndarray):
        if isinstance(n, Leaf):
            out[idx] = n.label
            return
        mask = X[idx, n.feature] <= n.threshold
        if mask.any():
            walk(n.left, idx[mask])
        if (~mask).any():
            walk(n.right, idx[~mask])

    walk(node, np.arange(X.shape[0]))
    return out


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeNode, ...]
    n_classes: int
    seed: int
    bootstrap: bool
    oob_accuracy: float | None = field(default=None, compare=False)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        for tree in self.trees:
            votes[np.arange(X.shape[0]), predict_tree(tree, X)] += 1
        return np.argmax(votes, axis=1)  # ties to the lowest class index


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = DEFAULT_N_TREES,
    max_features: int | None = None,
    max_depth: int | None = None,
    min_samples_split: int = DEFAULT_MIN_SAMPLES_SPLIT,
    bootstrap: bool = True,
    seed: int = 0,
    n_classes: int = 3,
) -> ForestModel:
    """Bagged ensemble; per-tree seeds derive from the master seed + index."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if n_trees < 1:
        raise DataError("n_trees must be >= 1")
    if np.unique(y).size < 2:
        raise DegenerateDataError("forest training needs at least two classes")
    n, d = X.shape
    if max_features is None:
        max_features = int(np.ceil(np.sqrt(d)))
    params = TreeParams(
        n_classes=n_classes,
        max_features=max_features,
        max_depth=max_depth,
        min_samples_split=min_samples_split,
    )
    trees = []
    oob_votes = np.zeros((n, n_classes), dtype=np.int64)
    for t in range(n_trees):
        rng = make_generator(derive_seed(seed, "tree", t))
        if bootstrap:
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.arange(n)
        tree = fit_tree(X[idx], y[idx], params, rng)
        trees.append(tree)
        if bootstrap:
            oob = np.setdiff1d(np.arange(n), idx, assume_unique=False)
            if oob.size:
                oob_votes[oob, predict_tree(tree, X[oob])] += 1
    oob_accuracy = None
    if bootstrap:
        seen = oob_votes.sum(axis=1) > 0
        if seen.any():
            oob_pred = np.argmax(oob_votes[seen], axis=1)
            oob_accuracy = float((oob_pred == y[seen]).mean())
    return ForestModel(
        trees=tuple(trees),
        n_classes=n_classes,
        seed=seed,
        bootstrap=bootstrap,
        oob_accuracy=oob_accuracy,
    )


def predict_forest(model: ForestModel, X: np.ndarray) -> np.ndarray:
    return model.predict(X)


def tree_to_arrays(root: TreeNode, n_classes: int) -> dict[str, np.ndarray]:
    """Preorder flattening for serialization; children indexed by position."""
    is_split, feature, threshold, left, right, counts, label = [], [], [], [], [], [], []

    def visit(node: TreeNode) -> int:
        pos = len(is_split)
        is_split.append(isinstance(node, Split))
        feature.append(node.feature if isinstance(node, Split) else -1)
        threshold.append(node.threshold if isinstance(node, Split) else 0.0)
        left.append(-1)
        right.append(-1)
        counts.append(node.counts if isinstance(node, Leaf) else np.zeros(n_classes, dtype=np.int64))
        label.append(node.label if isinstance(node, Leaf) else -1)
        if isinstance(node, Split):
            left[pos] = visit(node.left)
            right[pos] = visit(node.right)
        return pos

    visit(root)
    return {
        "is_split": np.array(is_split, dtype=np.uint8),
        "feature": np.array(feature, dtype=np.int32),
        "threshold": np.array(threshold, dtype=np.float64),
        "left": np.array(left, dtype=np.int32),
        "right": np.array(right, dtype=np.int32),
        "counts": np.stack(counts).astype(np.int64),
        "label": np.array(label, dtype=np.int32),
    }


def tree_from_arrays(arrays: dict[str, np.ndarray]) -> TreeNode:
    def build(pos: int) -> TreeNode:
        if arrays["is_split"][pos]:
            return Split(
                feature=int(arrays["feature"][pos]),
                threshold=float(arrays["threshold"][pos]),
                left=build(int(arrays["left"][pos])),
                right=build(int(arrays["right"][pos])),
            )
        return Leaf(counts=arrays["counts"][pos].copy(), label=int(arrays["label"][pos]))

    return build(0)
