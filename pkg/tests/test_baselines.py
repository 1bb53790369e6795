"""Logistic regression and random forest training, prediction, errors."""

from __future__ import annotations

import numpy as np
import pytest

from buyintent.baselines import (
    Forest,
    LogisticModel,
    TreeNode,
    default_mtry,
    forest_scores,
    logistic_loss_and_gradients,
    predict_forest,
    predict_logistic,
    train_forest,
    train_logistic,
    train_tree,
    tree_prob,
)
from buyintent.dataset import Dataset
from buyintent.evaluation import auc
from buyintent.util import TrainingDiverged


def make_ds(rows, labels):
    rows = np.asarray(rows, dtype=float)
    return Dataset(
        rows=rows,
        labels=np.asarray(labels, dtype=np.uint8),
        feature_names=[f"f{i}" for i in range(rows.shape[1])],
        aggregation="weekly",
        category_count=0,
        n_base_cols=rows.shape[1],
    )


def separable_ds(n=80, seed=0, margin=2.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = rng.normal(size=(n, 3)) * 0.3
    X[:, 0] += np.where(y == 1, margin, -margin)
    return make_ds(X, y)


def xor_ds():
    rows = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
    return make_ds(rows, [0, 1, 1, 0])


class TestLogisticGradients:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(13)
        for trial in range(5):
            X = rng.normal(size=(5, 4))
            y = rng.integers(0, 2, 5).astype(float)
            w = rng.normal(size=4) * 0.5
            b = float(rng.normal())
            l2 = 0.1
            loss, gw, gb = logistic_loss_and_gradients(w, b, X, y, l2)
            eps = 1e-6
            for j in range(4):
                wp, wm = w.copy(), w.copy()
                wp[j] += eps
                wm[j] -= eps
                lp, _, _ = logistic_loss_and_gradients(wp, b, X, y, l2)
                lm, _, _ = logistic_loss_and_gradients(wm, b, X, y, l2)
                fd = (lp - lm) / (2 * eps)
                assert gw[j] == pytest.approx(fd, rel=1e-6, abs=1e-9)
            lp, _, _ = logistic_loss_and_gradients(w, b + eps, X, y, l2)
            lm, _, _ = logistic_loss_and_gradients(w, b - eps, X, y, l2)
            assert gb == pytest.approx((lp - lm) / (2 * eps), rel=1e-6, abs=1e-9)

    def test_zero_parameters_loss_is_log_two(self):
        X = np.random.default_rng(1).normal(size=(6, 3))
        y = np.array([0, 1, 0, 1, 1, 0], dtype=float)
        loss, _, gb = logistic_loss_and_gradients(np.zeros(3), 0.0, X, y, 0.0)
        assert loss == pytest.approx(np.log(2.0))
        assert gb == pytest.approx(0.5 - y.mean())


class TestTrainLogistic:
    def test_untrained_model_predicts_half(self):
        model = LogisticModel(weights=np.zeros(3), bias=0.0)
        assert predict_logistic(model, np.zeros(3)) == 0.5

    def test_separable_data_reaches_auc_one(self):
        ds = separable_ds()
        model = train_logistic(ds, learning_rate=0.5, epochs=200, seed=0)
        scores = predict_logistic(model, ds.rows)
        assert auc(scores, ds.labels) == 1.0

    def test_full_batch_small_step_descends(self):
        ds = separable_ds(n=60, seed=3)
        model = train_logistic(
            ds, learning_rate=1e-3, epochs=50, seed=0, batch_size=None
        )
        trace = np.array(model.loss_trace)
        assert len(trace) == 50
        assert np.all(np.diff(trace) <= 1e-12)
        assert trace[-1] < trace[0]

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergence_names_epoch(self):
        ds = separable_ds(n=20, seed=5)
        with pytest.raises(TrainingDiverged) as exc:
            train_logistic(ds, learning_rate=1e160, epochs=5, l2=0.01, seed=0)
        assert exc.value.epoch == 0
        assert "epoch 0" in str(exc.value)

    def test_l2_shrinks_weights(self):
        ds = separable_ds(n=100, seed=7)
        free = train_logistic(ds, learning_rate=0.3, epochs=150, seed=0)
        tied = train_logistic(ds, learning_rate=0.3, epochs=150, l2=0.5, seed=0)
        assert np.linalg.norm(tied.weights) < np.linalg.norm(free.weights)

    def test_deterministic_per_seed(self):
        ds = separable_ds(n=50, seed=9)
        a = train_logistic(ds, epochs=20, seed=4)
        b = train_logistic(ds, epochs=20, seed=4)
        c = train_logistic(ds, epochs=20, seed=5)
        assert np.array_equal(a.weights, b.weights) and a.bias == b.bias
        assert not np.array_equal(a.weights, c.weights)

    def test_predict_shapes(self):
        ds = separable_ds(n=30, seed=2)
        model = train_logistic(ds, epochs=10, seed=0)
        batch = predict_logistic(model, ds.rows[:4])
        assert batch.shape == (4,)
        one = predict_logistic(model, ds.rows[0])
        assert isinstance(one, float)
        assert one == pytest.approx(batch[0])

    def test_predict_dimension_mismatch(self):
        model = LogisticModel(weights=np.zeros(3), bias=0.0)
        with pytest.raises(ValueError, match="features"):
            predict_logistic(model, np.zeros(5))

    def test_round_trip_preserves_predictions(self):
        ds = separable_ds(n=40, seed=11)
        model = train_logistic(ds, epochs=15, seed=0)
        clone = LogisticModel.from_dict(model.to_dict())
        assert np.allclose(
            predict_logistic(model, ds.rows), predict_logistic(clone, ds.rows)
        )


class TestDecisionTree:
    def test_pure_sample_stays_leaf(self):
        ds = make_ds([[0.0], [1.0], [2.0]], [0, 0, 0])
        node = train_tree(ds, seed=0)
        assert node.is_leaf
        assert node.prob == 0.0

    def test_two_point_split_uses_midpoint(self):
        ds = make_ds([[0.0], [1.0]], [0, 1])
        node = train_tree(ds, mtry=1, seed=0)
        assert node.feature == 0
        assert node.threshold == 0.5
        assert node.left.prob == 0.0
        assert node.right.prob == 1.0

    def test_xor_memorized_with_all_features(self):
        ds = xor_ds()
        node = train_tree(ds, mtry=2, seed=0)
        for x, y in zip(ds.rows, ds.labels):
            assert tree_prob(node, x) == float(y)

    def test_min_leaf_stops_growth(self):
        ds = make_ds([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
        node = train_tree(ds, min_leaf=5, seed=0)
        assert node.is_leaf

    def test_constant_features_give_leaf(self):
        ds = make_ds([[1.0, 2.0]] * 4, [0, 1, 0, 1])
        node = train_tree(ds, mtry=2, seed=0)
        assert node.is_leaf
        assert node.prob == 0.5

    def test_mtry_bounds_checked(self):
        ds = xor_ds()
        with pytest.raises(ValueError, match="mtry"):
            train_tree(ds, mtry=0)
        with pytest.raises(ValueError, match="mtry"):
            train_tree(ds, mtry=3)

    def test_empty_sample_rejected(self):
        ds = make_ds(np.zeros((0, 2)), [])
        with pytest.raises(ValueError, match="empty"):
            train_tree(ds)

    def test_serialization_round_trip(self):
        rng = np.random.default_rng(31)
        ds = make_ds(rng.normal(size=(40, 3)), rng.integers(0, 2, 40))
        node = train_tree(ds, seed=2)
        clone = TreeNode.from_dict(node.to_dict())
        probe = rng.normal(size=(25, 3))
        for x in probe:
            assert tree_prob(clone, x) == tree_prob(node, x)

    def test_default_mtry_is_sqrt_rounded_up(self):
        assert default_mtry(4) == 2
        assert default_mtry(5) == 3
        assert default_mtry(318) == 18


class TestForestTraining:
    def test_single_tree_without_bootstrap_matches_plain_tree(self):
        rng = np.random.default_rng(41)
        ds = make_ds(rng.normal(size=(30, 3)), rng.integers(0, 2, 30))
        forest = train_forest(ds, n_trees=1, mtry=3, seed=8, bootstrap=False)
        plain = train_tree(ds, mtry=3, seed=99)
        for x in ds.rows:
            assert tree_prob(forest.trees[0], x) == tree_prob(plain, x)

    def test_separable_data_reaches_auc_one(self):
        ds = separable_ds(n=60, seed=1)
        forest = train_forest(ds, n_trees=20, seed=0)
        assert auc(forest_scores(forest, ds.rows), ds.labels) == 1.0

    def test_same_seed_same_forest(self):
        ds = separable_ds(n=40, seed=2)
        a = train_forest(ds, n_trees=5, seed=3)
        b = train_forest(ds, n_trees=5, seed=3)
        assert a.to_dict() == b.to_dict()

    def test_different_seed_differs(self):
        ds = separable_ds(n=40, seed=2)
        a = train_forest(ds, n_trees=5, seed=3)
        b = train_forest(ds, n_trees=5, seed=4)
        assert a.to_dict() != b.to_dict()

    def test_xor_with_full_mtry_and_no_bootstrap(self):
        ds = xor_ds()
        forest = train_forest(ds, n_trees=3, mtry=2, seed=0, bootstrap=False)
        for x, y in zip(ds.rows, ds.labels):
            assert predict_forest(forest, x)["probability"] == float(y)

    def test_n_trees_validated(self):
        with pytest.raises(ValueError, match="n_trees"):
            train_forest(separable_ds(n=10), n_trees=0)

    def test_round_trip_preserves_scores(self):
        ds = separable_ds(n=30, seed=6)
        forest = train_forest(ds, n_trees=4, seed=1)
        clone = Forest.from_dict(forest.to_dict())
        assert np.array_equal(forest_scores(clone, ds.rows), forest_scores(forest, ds.rows))


class TestForestPrediction:
    def leaf(self, prob):
        return TreeNode(n_pos=int(prob * 10), n_total=10)

    def hand_forest(self, probs):
        return Forest(
            trees=[self.leaf(p) for p in probs],
            mtry=1,
            seed=0,
            bootstrap=False,
            n_features=2,
        )

    def test_probability_is_mean_of_leaf_probs(self):
        forest = self.hand_forest([1.0, 0.0, 1.0, 1.0])
        out = predict_forest(forest, np.zeros(2))
        assert out["probability"] == pytest.approx(0.75)

    def test_majority_vote_buy(self):
        forest = self.hand_forest([1.0, 1.0, 0.0])
        assert predict_forest(forest, np.zeros(2))["class"] == "buy"

    def test_tie_goes_to_non_buy(self):
        forest = self.hand_forest([1.0, 0.0])
        assert predict_forest(forest, np.zeros(2))["class"] == "non_buy"

    def test_duplicated_trees_do_not_change_the_call(self):
        single = self.hand_forest([1.0])
        doubled = self.hand_forest([1.0, 1.0])
        x = np.zeros(2)
        assert predict_forest(single, x)["class"] == predict_forest(doubled, x)["class"]
        assert predict_forest(single, x)["probability"] == predict_forest(doubled, x)["probability"]

    def test_half_probability_counts_as_buy_vote(self):
        forest = self.hand_forest([0.5, 0.5, 0.0])
        assert predict_forest(forest, np.zeros(2))["class"] == "buy"

    def test_dimension_mismatch_rejected(self):
        forest = self.hand_forest([1.0])
        with pytest.raises(ValueError, match="features"):
            predict_forest(forest, np.zeros(3))
        with pytest.raises(ValueError, match="features"):
            forest_scores(forest, np.zeros((2, 3)))

    def test_scores_agree_with_single_row_calls(self):
        ds = separable_ds(n=25, seed=14)
        forest = train_forest(ds, n_trees=7, seed=2)
        batch = forest_scores(forest, ds.rows)
        for i, x in enumerate(ds.rows):
            assert batch[i] == pytest.approx(predict_forest(forest, x)["probability"])


class TestOnFixture:
    def test_logistic_beats_chance_on_balanced_data(self, balanced_dataset):
        model = train_logistic(balanced_dataset, epochs=60, seed=0)
        scores = predict_logistic(model, balanced_dataset.rows)
        assert auc(scores, balanced_dataset.labels) > 0.6

    def test_forest_beats_chance_on_balanced_data(self, balanced_dataset):
        forest = train_forest(balanced_dataset, n_trees=30, seed=0)
        scores = forest_scores(forest, balanced_dataset.rows)
        assert auc(scores, balanced_dataset.labels) > 0.6
