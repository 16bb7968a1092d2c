"""Prediction-error metrics and period-shift comparison.

Two error flavors are reported and labeled distinctly: ``mae_obs``/``rmse``
are computed over individual test observations, while each region also
gets ``ae_region_mean``, the absolute difference between its mean
predicted and mean actual count. The two differ and serve different
readers (tables vs. per-region maps).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .errors import EmptyInput, LengthMismatch
from .nb2 import FitOptions, Nb2Model, fit_panel, predict_panel
from .panel import Panel, split, split_by_date


def mae(y, y_hat) -> float:
    """Mean absolute error."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"{y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise EmptyInput("no observations")
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    """Root mean squared error; always >= MAE of the same vectors."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"{y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise EmptyInput("no observations")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


@dataclass
class RegionErrors:
    mean_predicted: float
    mean_actual: float
    abs_error: float  # |mean_predicted - mean_actual| (ae_region_mean)
    mae: float
    rmse: float
    n_obs: int


@dataclass
class MetricReport:
    event_type: str
    period_kind: str
    granularity: str
    mae_obs: float
    rmse: float
    n_obs: int
    per_region: dict[str, RegionErrors] = field(default_factory=dict)

    def abs_errors(self) -> np.ndarray:
        return self._abs_errors

    _abs_errors: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


def evaluate_model(model: Nb2Model, test: Panel, granularity: str = "region") -> MetricReport:
    """Score a fitted model on held-out observations.

    Overall MAE/RMSE are observation-level; per-region entries add the
    mean-vs-mean absolute error used for error maps.
    """
    target = test
    if model.event_type is not None and model.event_type in test.event_types:
        target = test.slice(model.event_type)
    y, _, _ = target.arrays()
    y_hat = predict_panel(model, target)
    report = MetricReport(
        event_type=model.event_type or ",".join(target.event_types),
        period_kind=target.period_kind,
        granularity=granularity,
        mae_obs=mae(y, y_hat),
        rmse=rmse(y, y_hat),
        n_obs=len(y),
        _abs_errors=np.abs(y - y_hat),
    )
    # Cauchy-Schwarz; a violation means the metrics themselves are broken
    assert report.rmse >= report.mae_obs - 1e-12
    by_region: dict[str, list[int]] = {}
    for i, o in enumerate(target.observations):
        by_region.setdefault(o.region_id, []).append(i)
    for rid, idx in by_region.items():
        ya, yp = y[idx], y_hat[idx]
        report.per_region[rid] = RegionErrors(
            mean_predicted=float(yp.mean()),
            mean_actual=float(ya.mean()),
            abs_error=float(abs(yp.mean() - ya.mean())),
            mae=mae(ya, yp),
            rmse=rmse(ya, yp),
            n_obs=len(idx),
        )
    return report


def write_metric_reports(reports: list[MetricReport], path, metadata: list[str] | None = None):
    """Per-region metric rows: station,model,event_type,mae,rmse (+ overall)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in metadata or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["station", "model", "event_type", "mae", "rmse"])
        for rep in reports:
            writer.writerow(["ALL", rep.period_kind, rep.event_type, repr(rep.mae_obs), repr(rep.rmse)])
            for rid in sorted(rep.per_region):
                r = rep.per_region[rid]
                writer.writerow([rid, rep.period_kind, rep.event_type, repr(r.mae), repr(r.rmse)])


@dataclass
class PeriodComparison:
    before: MetricReport
    after: MetricReport
    cutoff: datetime
    per_region_delta: dict[str, tuple[float, float]]  # region -> (rmse_before, rmse_after)

    def to_csv(self, path, metadata: list[str] | None = None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in metadata or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["event_type", "model", "mae_before", "mae_after", "rmse_before", "rmse_after"]
            )
            writer.writerow(
                [
                    self.before.event_type,
                    self.before.period_kind,
                    repr(self.before.mae_obs),
                    repr(self.after.mae_obs),
                    repr(self.before.rmse),
                    repr(self.after.rmse),
                ]
            )


def compare_periods(
    panel: Panel,
    cutoff: datetime,
    feature_subset: list[str] | None = None,
    options: FitOptions | None = None,
    event_type: str | None = None,
    train_fraction: float = 0.7,
    seed: int = 0,
) -> PeriodComparison:
    """Independent train/eval on each side of a date cutoff.

    Both sides use the same split seed and fit options so the comparison
    isolates the period shift.
    """
    if event_type is None:
        types = panel.event_types
        if len(types) != 1:
            raise ValueError("panel has multiple event types; pass event_type")
        event_type = types[0]
    before_panel, after_panel = split_by_date(panel.slice(event_type), cutoff)
    reports = []
    for side in (before_panel, after_panel):
        parts = split(side, train_fraction, seed)
        model = fit_panel(parts.train, event_type, feature_subset, options)
        reports.append(evaluate_model(model, parts.test))
    before_rep, after_rep = reports
    shared = set(before_rep.per_region) & set(after_rep.per_region)
    delta = {
        rid: (before_rep.per_region[rid].rmse, after_rep.per_region[rid].rmse)
        for rid in sorted(shared)
    }
    return PeriodComparison(before=before_rep, after=after_rep, cutoff=cutoff, per_region_delta=delta)
