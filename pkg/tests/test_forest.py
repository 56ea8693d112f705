import numpy as np
import pytest

from csibench.errors import DataError, DegenerateDataError
from csibench.forest import (
    Leaf,
    Split,
    TreeParams,
    best_split,
    fit_forest,
    fit_tree,
    gini,
    predict_forest,
    predict_tree,
    tree_from_arrays,
    tree_to_arrays,
)
from csibench.rng import make_generator

from forest_oracle import oracle_fit_tree, trees_equal


class TestGini:
    def test_pure_node(self):
        assert gini([10, 0, 0]) == 0.0

    def test_uniform_three_class(self):
        assert gini([5, 5, 5]) == pytest.approx(2 / 3, abs=1e-15)

    def test_hand_arithmetic(self):
        assert gini([3, 1, 0]) == pytest.approx(0.375, abs=1e-15)

    def test_empty_node_rejected(self):
        with pytest.raises(DataError):
            gini([0, 0, 0])

    def test_negative_counts_rejected(self):
        with pytest.raises(DataError):
            gini([3, -1])

    def test_range_property(self, rng):
        for _ in range(200):
            c = int(rng.integers(2, 5))
            counts = rng.integers(0, 20, size=c)
            if counts.sum() == 0:
                continue
            g = gini(counts)
            assert 0.0 <= g <= 1.0 - 1.0 / c + 1e-12
            if np.count_nonzero(counts) == 1:
                assert g == 0.0


class TestBestSplit:
    def test_textbook_one_dimensional_case(self):
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array([0, 0, 1, 1])
        f, thr, gain = best_split(X, y, [0])
        assert f == 0
        assert thr == 5.5
        assert gain == pytest.approx(0.5, abs=1e-15)

    def test_exhaustive_threshold_enumeration(self):
        # All 3 candidate thresholds by hand: 0.5 and 10.5 give gain 1/6; 5.5 gives 1/2.
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array([0, 0, 1, 1])
        parent = gini([2, 2, 0])
        gains = {}
        for thr in (0.5, 5.5, 10.5):
            left = y[X[:, 0] <= thr]
            right = y[X[:, 0] > thr]
            gains[thr] = (
                parent
                - len(left) / 4 * gini(np.bincount(left, minlength=3))
                - len(right) / 4 * gini(np.bincount(right, minlength=3))
            )
        assert max(gains, key=gains.get) == 5.5
        assert gains[5.5] == pytest.approx(0.5)

    def test_pure_node_returns_none(self):
        X = np.array([[0.0], [5.0], [9.0]])
        assert best_split(X, np.array([1, 1, 1]), [0]) is None

    def test_duplicated_feature_prefers_lower_index(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [10.0, 10.0], [11.0, 11.0]])
        y = np.array([0, 0, 1, 1])
        f, thr, _ = best_split(X, y, [0, 1])
        assert f == 0
        assert thr == 5.5

    def test_no_informative_split_returns_none(self):
        X = np.array([[1.0], [1.0], [1.0], [1.0]])
        y = np.array([0, 1, 0, 1])
        assert best_split(X, y, [0]) is None

    def test_gain_nonnegative_property(self, rng):
        for _ in range(50):
            X = rng.normal(size=(12, 3))
            y = rng.integers(0, 3, size=12)
            found = best_split(X, y, range(3))
            if found is not None:
                assert found[2] > 0


class TestFitTree:
    def test_separable_one_dimensional_depth_one(self):
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array([0, 0, 1, 1])
        tree = fit_tree(X, y)
        assert isinstance(tree, Split)
        assert isinstance(tree.left, Leaf) and isinstance(tree.right, Leaf)
        assert np.array_equal(predict_tree(tree, X), y)

    def test_max_depth_zero_single_leaf(self):
        X = np.array([[0.0], [1.0], [10.0]])
        y = np.array([1, 1, 0])
        tree = fit_tree(X, y, TreeParams(max_depth=0))
        assert isinstance(tree, Leaf)
        assert tree.label == 1

    def test_matches_cart_oracle_on_six_point_fixtures(self, rng):
        for trial in range(30):
            X = np.round(rng.normal(size=(6, 2)) * 3, 1)
            y = rng.integers(0, 3, size=6)
            tree = fit_tree(X, y, TreeParams(max_features=2))
            oracle = oracle_fit_tree(X, y)
            assert trees_equal(tree, oracle), f"trial {trial}"

    def test_matches_cart_oracle_more_features(self, rng):
        for trial in range(10):
            X = np.round(rng.normal(size=(9, 4)), 1)
            y = rng.integers(0, 3, size=9)
            tree = fit_tree(X, y, TreeParams(max_features=4))
            assert trees_equal(tree, oracle_fit_tree(X, y)), f"trial {trial}"

    def test_monotone_transform_invariance_on_training_points(self, rng):
        X = rng.normal(size=(40, 3))
        y = (X[:, 0] + X[:, 1] > 0).astype(int)
        t1 = fit_tree(X, y)
        t2 = fit_tree(np.exp(X), y)  # strictly monotone per feature
        assert np.array_equal(predict_tree(t1, X), predict_tree(t2, np.exp(X)))


class TestForest:
    def test_single_tree_no_bootstrap_equals_fit_tree(self, rng):
        X = rng.normal(size=(30, 4))
        y = (X[:, 0] > 0).astype(int)
        params_seeded_tree = fit_tree(
            X, y, TreeParams(max_features=2), make_generator(_first_tree_seed(7))
        )
        forest = fit_forest(X, y, n_trees=1, max_features=2, bootstrap=False, seed=7)
        probes = rng.normal(size=(50, 4))
        assert np.array_equal(
            predict_tree(params_seeded_tree, probes), predict_forest(forest, probes)
        )

    def test_three_blobs_high_holdout_accuracy(self, rng):
        means = [(0, 0), (5, 0), (0, 5)]
        X = np.vstack([rng.normal(0, 0.4, size=(60, 2)) + m for m in means])
        y = np.repeat(np.arange(3), 60)
        forest = fit_forest(X, y, n_trees=100, seed=1)
        Xt = np.vstack([rng.normal(0, 0.4, size=(80, 2)) + m for m in means])
        yt = np.repeat(np.arange(3), 80)
        assert (predict_forest(forest, Xt) == yt).mean() >= 0.99
        # Out-of-bag accuracy within 10 points of a single tree's holdout accuracy.
        single = fit_tree(X, y, TreeParams(max_features=2), make_generator(3))
        single_acc = (predict_tree(single, Xt) == yt).mean()
        assert forest.oob_accuracy is not None
        assert single_acc - 0.10 <= forest.oob_accuracy <= 1.0

    def test_same_seed_identical_serialized_trees(self, rng):
        X = rng.normal(size=(50, 5))
        y = rng.integers(0, 3, size=50)
        f1 = fit_forest(X, y, n_trees=10, seed=42)
        f2 = fit_forest(X, y, n_trees=10, seed=42)
        for t1, t2 in zip(f1.trees, f2.trees):
            a1 = tree_to_arrays(t1, 3)
            a2 = tree_to_arrays(t2, 3)
            assert all(np.array_equal(a1[k], a2[k]) for k in a1)

    def test_tree_array_roundtrip(self, rng):
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 3, size=40)
        tree = fit_tree(X, y, TreeParams(max_features=2), make_generator(5))
        back = tree_from_arrays(tree_to_arrays(tree, 3))
        probes = rng.normal(size=(100, 3))
        assert np.array_equal(predict_tree(tree, probes), predict_tree(back, probes))

    def test_majority_vote_ties_to_lowest_class(self):
        # Two constant-leaf trees voting different classes.
        t0 = Leaf(counts=np.array([5, 0, 0]), label=0)
        t2 = Leaf(counts=np.array([0, 0, 5]), label=2)
        from csibench.forest import ForestModel

        model = ForestModel(trees=(t0, t2), n_classes=3, seed=0, bootstrap=False)
        assert model.predict(np.zeros((1, 2)))[0] == 0

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateDataError):
            fit_forest(np.zeros((5, 2)), np.zeros(5, dtype=int))

    def test_bad_tree_count_rejected(self, rng):
        X = rng.normal(size=(10, 2))
        y = np.array([0] * 5 + [1] * 5)
        with pytest.raises(DataError):
            fit_forest(X, y, n_trees=0)


def _first_tree_seed(master: int) -> int:
    from csibench.rng import derive_seed

    return derive_seed(master, "tree", 0)
