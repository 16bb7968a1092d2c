"""Jenks natural-breaks risk tiers.

Uses Fisher's exact dynamic program (optimal 1-D classification), not the
heuristic reallocation variant, so results are deterministic and can be
checked against brute force. Cost-ties resolve to the partition with the
smallest first cut, then second, and so on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import TooFewValues

RISK_LABELS = ("Low", "Medium", "High", "Severe")


def _prefix_costs(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s1 = np.concatenate([[0.0], np.cumsum(values)])
    s2 = np.concatenate([[0.0], np.cumsum(values**2)])
    return s1, s2


def _segment_cost(s1, s2, i: int, j: int) -> float:
    """Within-class sum of squared deviations for sorted values[i:j]."""
    m = j - i
    total = s1[j] - s1[i]
    return float(s2[j] - s2[i] - total * total / m)


def jenks_breaks(values, k: int) -> list[float]:
    """Optimal k-class break values (upper bounds of the first k-1 classes).

    Minimizes total within-class SSD over contiguous partitions of the
    sorted values.
    """
    data = np.sort(np.asarray(values, dtype=float))
    n = len(data)
    if k < 2:
        raise ValueError("need at least 2 classes")
    if n < k:
        raise TooFewValues(f"{n} values cannot fill {k} classes")
    s1, s2 = _prefix_costs(data)

    # suffix[m][i] = minimal cost of splitting data[i:] into m classes
    inf = np.inf
    suffix = np.full((k + 1, n + 1), inf)
    suffix[0][n] = 0.0
    for m in range(1, k + 1):
        # data[i:] needs at least m and admits at most n-i classes
        for i in range(n - m, -1, -1):
            best = inf
            for j in range(i + 1, n - m + 2):
                rest = suffix[m - 1][j]
                if rest == inf:
                    continue
                c = _segment_cost(s1, s2, i, j) + rest
                if c < best:
                    best = c
            suffix[m][i] = best

    # greedy reconstruction: smallest cut achieving the optimum at each level
    cuts = []
    i, eps = 0, 1e-9
    for m in range(k, 1, -1):
        target = suffix[m][i]
        for j in range(i + 1, n - (m - 1) + 2):
            if _segment_cost(s1, s2, i, j) + suffix[m - 1][j] <= target + eps * (1 + abs(target)):
                cuts.append(j)
                i = j
                break
    return [float(data[c - 1]) for c in cuts]


def brute_force_breaks(values, k: int) -> tuple[list[float], float]:
    """Exhaustive minimal-SSD partition; oracle for small inputs."""
    from itertools import combinations

    data = np.sort(np.asarray(values, dtype=float))
    n = len(data)
    if n < k:
        raise TooFewValues(f"{n} values cannot fill {k} classes")
    s1, s2 = _prefix_costs(data)
    best_cost, best_cuts = np.inf, None
    for cuts in combinations(range(1, n), k - 1):
        bounds = (0,) + cuts + (n,)
        cost = sum(_segment_cost(s1, s2, bounds[m], bounds[m + 1]) for m in range(k))
        if cost < best_cost - 1e-12 or (
            abs(cost - best_cost) <= 1e-12 and (best_cuts is None or cuts < best_cuts)
        ):
            best_cost, best_cuts = cost, cuts
    return [float(data[c - 1]) for c in best_cuts], float(best_cost)


def partition_cost(values, breaks) -> float:
    """Total within-class SSD of values under the given break values."""
    data = np.sort(np.asarray(values, dtype=float))
    s1, s2 = _prefix_costs(data)
    idx = [0] + [int(np.searchsorted(data, b, side="right")) for b in breaks] + [len(data)]
    return float(
        sum(_segment_cost(s1, s2, idx[m], idx[m + 1]) for m in range(len(idx) - 1) if idx[m + 1] > idx[m])
    )


@dataclass
class RiskClassification:
    k: int
    breaks: list[float]  # ascending, length k-1
    labels: tuple[str, ...]
    assignment: dict[str, int]  # region_id -> class index
    values: dict[str, float]

    def label_of(self, region_id: str) -> str:
        return self.labels[self.assignment[region_id]]

    def to_csv(self, path, metadata: list[str] | None = None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in metadata or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["region_id", "value", "class"])
            for rid in self.assignment:
                writer.writerow([rid, repr(float(self.values[rid])), self.label_of(rid)])


def classify_regions(
    predictions: dict[str, float],
    k: int = 4,
    labels: tuple[str, ...] = RISK_LABELS,
) -> RiskClassification:
    """Assign regions to risk tiers from predicted mean event counts.

    Class membership uses half-open intervals: value <= b1 is the lowest
    tier, value > b_{k-1} the top (Severe for k=4).
    """
    if len(labels) != k:
        raise ValueError(f"need {k} labels, got {len(labels)}")
    if len(predictions) < k:
        raise TooFewValues(f"{len(predictions)} regions cannot fill {k} classes")
    breaks = jenks_breaks(list(predictions.values()), k)
    assignment = {
        rid: int(np.searchsorted(breaks, value, side="left"))
        for rid, value in predictions.items()
    }
    return RiskClassification(
        k=k,
        breaks=breaks,
        labels=tuple(labels),
        assignment=assignment,
        values=dict(predictions),
    )
