"""Feature ranking with a conditional-inference-style regression forest.

Split selection is gated by a Monte Carlo permutation test: at each node
a random subset of candidate features is scored by the p-value of its
absolute Pearson association with the response, and splitting stops when
no candidate is significant. This keeps the variable selection unbiased
(a feature's split count cannot inflate its importance), in the spirit of
conditional-inference forests, without asymptotic test distributions.

Importance is the classic out-of-bag permutation score: the mean increase
in OOB MSE when one feature's column is shuffled, clipped at zero and
normalized to sum to one.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .errors import TooFewRows

log = logging.getLogger(__name__)


@dataclass
class ForestConfig:
    n_trees: int = 1000
    mtry: int | None = None  # default ceil(p / 3)
    min_node: int = 5
    n_permutations: int = 199
    alpha_stop: float = 0.05
    seed: int = 0
    subsample_fraction: float = 0.632
    # raw importance must be statistically significant across trees and
    # material against the OOB error scale before normalization (see
    # permutation_importance); both gates are needed because the sum-to-one
    # step would otherwise inflate noise-level scores
    min_t_stat: float = 3.0
    min_gain_fraction: float = 0.025

    def resolved_mtry(self, p: int) -> int:
        m = self.mtry if self.mtry is not None else ceil(p / 3)
        return max(1, min(m, p))


@dataclass
class Tree:
    """Array-based regression tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if len(idx) == 0:
                continue
            f = self.feature[node]
            if f < 0:
                out[idx] = self.value[node]
                continue
            go_left = X[idx, f] <= self.threshold[node]
            stack.append((self.left[node], idx[go_left]))
            stack.append((self.right[node], idx[~go_left]))
        return out

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))


class _TreeBuilder:
    def __init__(self, X, y, config: ForestConfig, rng: np.random.Generator):
        self.X = X
        self.y = y
        self.config = config
        self.rng = rng
        self.mtry = config.resolved_mtry(X.shape[1])
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self, mean: float) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(mean)
        return len(self.feature) - 1

    def _select_feature(self, idx: np.ndarray) -> int | None:
        """Permutation-test the candidate features; return the winner or None."""
        y = self.y[idx]
        yc = y - y.mean()
        norm_y = np.sqrt(yc @ yc)
        if norm_y == 0:
            return None
        p = self.X.shape[1]
        candidates = np.sort(self.rng.choice(p, size=self.mtry, replace=False))
        n_perm = self.config.n_permutations
        perms = self.rng.permuted(np.tile(yc, (n_perm, 1)), axis=1)
        best = (np.inf, -1)
        for f in candidates:
            xc = self.X[idx, f] - self.X[idx, f].mean()
            norm_x = np.sqrt(xc @ xc)
            if norm_x == 0:
                continue
            observed = abs(xc @ yc) / (norm_x * norm_y)
            null = np.abs(perms @ xc) / (norm_x * norm_y)
            p_val = (1.0 + np.sum(null >= observed - 1e-12)) / (n_perm + 1.0)
            if (p_val, f) < best:
                best = (p_val, f)
        if best[1] < 0 or best[0] > self.config.alpha_stop:
            return None
        return int(best[1])

    def _best_split(self, idx: np.ndarray, f: int) -> float | None:
        """Cut point on feature f maximizing the between-child SS reduction."""
        x = self.X[idx, f]
        y = self.y[idx]
        order = np.argsort(x, kind="stable")
        xs, ys = x[order], y[order]
        n = len(idx)
        m = self.config.min_node
        lo, hi = m, n - m  # left child takes xs[:i]
        if lo > hi:
            return None
        csum = np.cumsum(ys)
        csum2 = np.cumsum(ys**2)
        i = np.arange(lo, hi + 1)  # i <= n - min_node, so xs[i] is in range
        sse_left = csum2[i - 1] - csum[i - 1] ** 2 / i
        tot, tot2 = csum[-1], csum2[-1]
        sse_right = (tot2 - csum2[i - 1]) - (tot - csum[i - 1]) ** 2 / (n - i)
        valid = xs[i - 1] < xs[i]
        if not np.any(valid):
            return None
        cost = np.where(valid, sse_left + sse_right, np.inf)
        k = int(i[np.argmin(cost)])
        return float(0.5 * (xs[k - 1] + xs[k]))

    def build(self, idx: np.ndarray) -> int:
        node = self._new_node(float(self.y[idx].mean()))
        if len(idx) < 2 * self.config.min_node:
            return node
        f = self._select_feature(idx)
        if f is None:
            return node
        cut = self._best_split(idx, f)
        if cut is None:
            return node
        go_left = self.X[idx, f] <= cut
        left_id = self.build(idx[go_left])
        right_id = self.build(idx[~go_left])
        self.feature[node] = f
        self.threshold[node] = cut
        self.left[node] = left_id
        self.right[node] = right_id
        return node

    def finish(self) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=int),
            threshold=np.array(self.threshold, dtype=float),
            left=np.array(self.left, dtype=int),
            right=np.array(self.right, dtype=int),
            value=np.array(self.value, dtype=float),
        )


def fit_tree(X, y, config: ForestConfig, rng: np.random.Generator | int) -> Tree:
    """Grow one permutation-gated regression tree on the given rows."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 2 * config.min_node:
        raise TooFewRows(f"{len(y)} rows < 2 * min_node = {2 * config.min_node}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    builder = _TreeBuilder(X, y, config, rng)
    builder.build(np.arange(len(y)))
    return builder.finish()


@dataclass
class Forest:
    trees: list[Tree]
    oob_indices: list[np.ndarray]
    config: ForestConfig


def fit_forest(X, y, config: ForestConfig) -> Forest:
    """Train the forest on subsamples without replacement.

    Per-tree RNG streams are keyed by (seed, tree index), so the result is
    identical however tree training is scheduled.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    n_sub = int(np.floor(config.subsample_fraction * n))
    if n_sub < 2 * config.min_node:
        raise TooFewRows(f"subsample of {n_sub} rows < 2 * min_node")
    if n_sub >= n:
        raise ValueError("subsample_fraction leaves no out-of-bag rows")
    trees, oobs = [], []
    for t in range(config.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(t,)))
        sub = np.sort(rng.choice(n, size=n_sub, replace=False))
        builder = _TreeBuilder(X[sub], y[sub], config, rng)
        builder.build(np.arange(n_sub))
        trees.append(builder.finish())
        mask = np.ones(n, dtype=bool)
        mask[sub] = False
        oobs.append(np.flatnonzero(mask))
    return Forest(trees=trees, oob_indices=oobs, config=config)


@dataclass
class ImportanceReport:
    ranked: list[tuple[str, float]]  # descending score, ties by name
    threshold: float
    selected: list[str] = field(default_factory=list)

    def scores(self) -> dict[str, float]:
        return dict(self.ranked)

    def to_csv(self, path, metadata: list[str] | None = None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in metadata or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["feature", "score", "selected"])
            for name, score in self.ranked:
                writer.writerow([name, repr(float(score)), str(name in self.selected).lower()])

    def to_json(self) -> str:
        return json.dumps(
            {
                "ranked": [{"feature": n, "score": s} for n, s in self.ranked],
                "threshold": self.threshold,
                "selected": self.selected,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"


def permutation_importance(
    forest: Forest,
    X,
    y,
    feature_names: list[str],
    threshold: float = 0.05,
) -> ImportanceReport:
    """Out-of-bag permutation importance, normalized to sum to one.

    Raw per-feature scores are the mean OOB MSE increase across trees.
    A feature keeps its score only if that mean is significantly positive
    (> min_t_stat standard errors over trees) and material (> a small
    fraction of the OOB error itself); everything else is zeroed along
    with negative raw scores. Without those gates, a response carrying no
    signal at all would have its sub-noise raw scores blown up to
    dominant normalized ones by the sum-to-one step.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    if len(feature_names) != p:
        raise ValueError("feature_names length must match X")
    n_trees = len(forest.trees)
    deltas = np.zeros((n_trees, p))
    baselines = np.zeros(n_trees)
    for t, (tree, oob) in enumerate(zip(forest.trees, forest.oob_indices)):
        if len(oob) == 0:
            continue
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=forest.config.seed, spawn_key=(t, 1))
        )
        X_oob = X[oob]
        y_oob = y[oob]
        base = np.mean((tree.predict(X_oob) - y_oob) ** 2)
        baselines[t] = base
        for f in range(p):
            perm = rng.permutation(len(oob))
            X_perm = X_oob.copy()
            X_perm[:, f] = X_oob[perm, f]
            deltas[t, f] = np.mean((tree.predict(X_perm) - y_oob) ** 2) - base
    raw = deltas.mean(axis=0)
    scores = np.clip(raw, 0.0, None)
    if n_trees >= 2 and forest.config.min_t_stat > 0:
        se = deltas.std(axis=0, ddof=1) / np.sqrt(n_trees)
        scores[raw < forest.config.min_t_stat * se] = 0.0
    scores[raw < forest.config.min_gain_fraction * baselines.mean()] = 0.0
    total = scores.sum()
    if total > 0:
        scores = scores / total
    ranked = sorted(zip(feature_names, scores), key=lambda kv: (-kv[1], kv[0]))
    report = ImportanceReport(ranked=[(n, float(s)) for n, s in ranked], threshold=threshold)
    report.selected = select_features(report, threshold)
    return report


def select_features(report: ImportanceReport, threshold: float = 0.05) -> list[str]:
    """Features meeting the score threshold, in rank order; top-1 fallback."""
    chosen = [name for name, score in report.ranked if score >= threshold]
    if not chosen:
        log.warning("no feature scored >= %.3g; falling back to the top-ranked one", threshold)
        chosen = [report.ranked[0][0]]
    return chosen


def rank_features(
    X,
    y,
    feature_names: list[str],
    config: ForestConfig | None = None,
    threshold: float = 0.05,
) -> ImportanceReport:
    """Fit a forest and produce its importance report in one call."""
    cfg = config or ForestConfig()
    forest = fit_forest(X, y, cfg)
    return permutation_importance(forest, X, y, feature_names, threshold)
