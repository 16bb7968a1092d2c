"""Descriptive statistics and feature-event correlation.

City-level rows sum counts across regions per period before computing
moments; the per-region variant treats every (region, period) cell as an
observation. Standard deviation is the sample form (n-1) by default, with
a switch for the population form.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ZeroVariance
from .panel import Panel


@dataclass
class DescriptiveRow:
    event_type: str
    period_kind: str
    mean_mu: float
    stddev_sigma: float
    cv: float | None  # None when the mean is zero
    n_periods: int


def _series_stats(series: np.ndarray, ddof: int) -> tuple[float, float, float | None]:
    mean = float(series.mean())
    sd = float(series.std(ddof=ddof)) if len(series) > ddof else 0.0
    cv = sd / mean if mean > 0 else None
    return mean, sd, cv


def describe(panel: Panel, level: str = "city", sample_std: bool = True) -> list[DescriptiveRow]:
    """Per-event-type mean, standard deviation, and CV of period counts.

    ``level`` is "city" (counts summed over regions first) or "region"
    (every region-period cell is one observation).
    """
    if not panel.observations:
        raise ValueError("cannot describe an empty panel")
    if level not in ("city", "region"):
        raise ValueError(f"unknown level {level!r}")
    ddof = 1 if sample_std else 0
    rows = []
    for etype in panel.event_types:
        obs = [o for o in panel.observations if o.event_type == etype]
        if level == "city":
            totals: dict = {}
            for o in obs:
                totals[o.period_start] = totals.get(o.period_start, 0) + o.count_y
            series = np.array([totals[k] for k in sorted(totals)], dtype=float)
        else:
            series = np.array([o.count_y for o in obs], dtype=float)
        mean, sd, cv = _series_stats(series, ddof)
        rows.append(
            DescriptiveRow(
                event_type=etype,
                period_kind=panel.period_kind,
                mean_mu=mean,
                stddev_sigma=sd,
                cv=cv,
                n_periods=len(series),
            )
        )
    return rows


def write_descriptive_rows(rows: list[DescriptiveRow], path, metadata: list[str] | None = None):
    """CSV layout: event_type,interval,mean,stddev,cv."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in metadata or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["event_type", "interval", "mean", "stddev", "cv"])
        for r in rows:
            writer.writerow(
                [
                    r.event_type,
                    r.period_kind,
                    repr(r.mean_mu),
                    repr(r.stddev_sigma),
                    "" if r.cv is None else repr(r.cv),
                ]
            )


def pearson(x, y) -> float:
    """Pearson correlation of two equal-length series."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("series must be 1-D and equal length")
    if len(x) < 2:
        raise ValueError("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(dx @ dx)
    sy = np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise ZeroVariance("constant series has no defined correlation")
    return float((dx @ dy) / (sx * sy))


@dataclass
class CorrelationMatrix:
    feature_names: list[str]
    event_types: list[str]
    rho: np.ndarray  # (n_features, n_types); NaN marks undefined cells

    def undefined(self) -> np.ndarray:
        return ~np.isfinite(self.rho)

    def to_csv(self, path, ndigits: int | None = None, metadata: list[str] | None = None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in metadata or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["feature"] + list(self.event_types))
            for name, row in zip(self.feature_names, self.rho):
                cells = [
                    ""
                    if not np.isfinite(v)
                    else (repr(round(float(v), ndigits)) if ndigits is not None else repr(float(v)))
                    for v in row
                ]
                writer.writerow([name] + cells)


def correlation_matrix(panel: Panel) -> CorrelationMatrix:
    """Correlate static per-region features against span-total counts.

    Static features cannot explain within-region temporal variation, so
    each region contributes one point: its feature value against its
    total event count over the span. Degenerate cells are NaN.
    """
    if not panel.feature_names:
        raise ValueError("panel carries no features; join features first")
    regions = panel.region_ids
    types = panel.event_types
    totals = {(r, t): 0 for r in regions for t in types}
    feats: dict[str, np.ndarray] = {}
    for o in panel.observations:
        totals[(o.region_id, o.event_type)] += o.count_y
        feats.setdefault(o.region_id, o.x)
    X = np.array([feats[r] for r in regions], dtype=float)
    rho = np.full((len(panel.feature_names), len(types)), np.nan)
    for k, etype in enumerate(types):
        y = np.array([totals[(r, etype)] for r in regions], dtype=float)
        for f in range(X.shape[1]):
            try:
                rho[f, k] = pearson(X[:, f], y)
            except (ZeroVariance, ValueError):
                pass
    return CorrelationMatrix(list(panel.feature_names), types, rho)


@dataclass
class Ecdf:
    """Right-continuous empirical CDF of non-negative values."""

    thresholds: np.ndarray  # sorted unique values
    fractions: np.ndarray  # cumulative fraction at each threshold

    def __call__(self, t: float) -> float:
        i = np.searchsorted(self.thresholds, t, side="right") - 1
        return float(self.fractions[i]) if i >= 0 else 0.0

    def to_csv(self, path, metadata: list[str] | None = None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in metadata or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["abs_error", "cumulative_fraction"])
            for t, f in zip(self.thresholds, self.fractions):
                writer.writerow([repr(float(t)), repr(float(f))])


def residual_ecdf(abs_errors) -> Ecdf:
    """ECDF of absolute errors; F(max) = 1."""
    values = np.asarray(abs_errors, dtype=float)
    if values.size == 0:
        raise ValueError("need at least one error value")
    if np.any(values < 0):
        raise ValueError("absolute errors must be non-negative")
    sorted_vals = np.sort(values)
    thresholds, last_idx = np.unique(sorted_vals, return_index=True)
    # count of values <= threshold: index of the next distinct value
    counts = np.append(last_idx[1:], len(sorted_vals))
    return Ecdf(thresholds=thresholds, fractions=counts / len(sorted_vals))
