"""Permutation-gated trees and out-of-bag importance."""

import numpy as np
import pytest

from eventrisk import errors
from eventrisk.importance import (
    ForestConfig,
    ImportanceReport,
    fit_forest,
    fit_tree,
    rank_features,
    select_features,
)


def names(p):
    return [f"f{j}" for j in range(p)]


class TestFitTree:
    def test_constant_response_single_leaf(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0, 1, (100, 3))
        y = np.full(100, 2.5)
        tree = fit_tree(X, y, ForestConfig(), rng=1)
        assert tree.n_leaves == 1
        np.testing.assert_allclose(tree.predict(X), 2.5)

    def test_root_splits_on_step_signal(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed + 500)
            X = rng.uniform(0, 1, (500, 3))
            y = np.where(X[:, 1] > 0.5, 3.0, 0.0) + rng.normal(0, 0.2, 500)
            cfg = ForestConfig(mtry=3, seed=seed)
            tree = fit_tree(X, y, cfg, rng=np.random.default_rng(seed))
            if tree.feature[0] == 1:
                hits += 1
        assert hits >= 19

    def test_too_few_rows(self):
        with pytest.raises(errors.TooFewRows):
            fit_tree(np.zeros((9, 2)), np.zeros(9), ForestConfig(min_node=5), rng=0)

    def test_pure_noise_often_stays_stump(self):
        # the permutation gate keeps spurious splits rare
        rng = np.random.default_rng(3)
        stumps = 0
        for seed in range(50):
            X = rng.uniform(0, 1, (200, 4))
            y = rng.normal(0, 1, 200)
            tree = fit_tree(X, y, ForestConfig(mtry=2), rng=seed)
            stumps += tree.n_leaves == 1
        # two candidates at alpha 0.05: expect roughly >= 85% stumps
        assert stumps >= 40


class TestPermutationImportance:
    def test_perfect_single_feature_scores_one(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 1, (300, 1))
        y = 3.0 * X[:, 0]
        cfg = ForestConfig(n_trees=50, seed=5)
        rep = rank_features(X, y, ["only"], cfg)
        assert rep.ranked[0] == ("only", 1.0)

    def test_exchangeable_twins_share_importance(self):
        for seed in range(20):
            rng = np.random.default_rng(seed + 40_000)
            x = rng.uniform(0, 1, 500)
            X = np.column_stack([x, x])
            y = 2.0 * x + rng.normal(0, 0.5, 500)
            rep = rank_features(X, y, ["a", "b"], ForestConfig(n_trees=100, seed=seed))
            scores = rep.scores()
            assert abs(scores["a"] - 0.5) <= 0.15
            assert abs(scores["b"] - 0.5) <= 0.15

    def test_noise_beside_signal_scores_low(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed + 30_000)
            X = rng.uniform(0, 1, (500, 2))
            y = 2.0 * X[:, 0] + rng.normal(0, 0.3, 500)
            rep = rank_features(X, y, ["sig", "noise"], ForestConfig(n_trees=100, seed=seed))
            if rep.scores()["noise"] < 0.05:
                hits += 1
        assert hits >= 19

    def test_permuted_response_breaks_importance(self):
        # the significance gate needs a real forest behind it; small tree
        # counts make the per-tree MSE deltas too heavy-tailed to test
        p = 4
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed + 60_000)
            X = rng.uniform(0, 1, (400, p))
            y = 2.0 * X[:, 0] + rng.normal(0, 0.3, 400)
            y_broken = rng.permutation(y)
            rep = rank_features(X, y_broken, names(p), ForestConfig(n_trees=200, seed=seed))
            if all(s < 2 / p + 0.05 for _, s in rep.ranked):
                hits += 1
        assert hits >= 19

    def test_identical_seed_identical_report(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(0, 1, (300, 4))
        y = X[:, 2] + rng.normal(0, 0.5, 300)
        cfg = ForestConfig(n_trees=60, seed=123)
        a = rank_features(X, y, names(4), cfg)
        b = rank_features(X, y, names(4), cfg)
        assert a.ranked == b.ranked
        assert a.selected == b.selected

    def test_affine_rescaling_preserves_ranking(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(0, 1, (400, 3))
        y = 1.5 * X[:, 0] - 0.8 * X[:, 1] + rng.normal(0, 0.4, 400)
        cfg = ForestConfig(n_trees=80, seed=11)
        base = rank_features(X, y, names(3), cfg)
        X2 = X.copy()
        X2[:, 0] = 40.0 * X2[:, 0] + 7.0
        scaled = rank_features(X2, y, names(3), cfg)
        assert [n for n, _ in base.ranked] == [n for n, _ in scaled.ranked]
        np.testing.assert_allclose(
            [s for _, s in base.ranked], [s for _, s in scaled.ranked], atol=1e-12
        )

    def test_oob_exists_for_every_tree(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(0, 1, (100, 2))
        y = rng.normal(size=100)
        forest = fit_forest(X, y, ForestConfig(n_trees=20, seed=2))
        assert all(len(oob) > 0 for oob in forest.oob_indices)


class TestSelectFeatures:
    def _report(self, scores):
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return ImportanceReport(ranked=ranked, threshold=0.05)

    def test_over_threshold_in_rank_order(self):
        rep = self._report({"A": 0.6, "B": 0.3, "C": 0.04})
        assert select_features(rep) == ["A", "B"]

    def test_fallback_to_top_one(self):
        rep = self._report({"A": 0.04, "B": 0.03})
        assert select_features(rep) == ["A"]

    def test_exact_threshold_included(self):
        rep = self._report({"A": 0.6, "B": 0.05})
        assert select_features(rep) == ["A", "B"]

    def test_csv_and_json_round(self, tmp_path):
        rep = self._report({"A": 0.7, "B": 0.3})
        rep.selected = select_features(rep)
        rep.to_csv(tmp_path / "imp.csv", metadata=["fixture"])
        text = (tmp_path / "imp.csv").read_text()
        assert "A,0.7,true" in text
        doc = rep.to_json()
        assert '"selected"' in doc
