"""Synthetic-city generator with planted ground truth.

Counts are drawn from the same mean/dispersion family the fitter assumes
(Gamma-Poisson mixture), so parameter recovery can be asserted against
the truth record. Every cell's draws come from an RNG keyed by
(seed, region, period, type), which makes generation order-independent
and reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .ingest import EventRecord, FeatureTable
from .panel import Observation, Panel, _next_period

_DEFAULT_START = {
    "hourly": datetime(2016, 1, 4, tzinfo=timezone.utc),
    "daily": datetime(2016, 1, 4, tzinfo=timezone.utc),
    "weekly": datetime(2016, 1, 4, tzinfo=timezone.utc),  # a Monday
    "monthly": datetime(2016, 1, 1, tzinfo=timezone.utc),
    "yearly": datetime(2016, 1, 1, tzinfo=timezone.utc),
}


@dataclass
class FeatureSpec:
    name: str
    low: float = 0.0
    high: float = 1.0


@dataclass
class ScenarioSpec:
    n_regions: int
    features: list[FeatureSpec]
    coefficients: dict[str, list[float]]  # event_type -> b (intercept first)
    alpha: dict[str, float]  # event_type -> dispersion
    period_kind: str = "weekly"
    n_periods: int = 100
    seed: int = 0
    exposure_t: float = 1.0
    start: datetime | None = None

    def __post_init__(self):
        if set(self.coefficients) != set(self.alpha):
            raise ValueError("coefficients and alpha must cover the same event types")
        for etype, b in self.coefficients.items():
            if len(b) != len(self.features) + 1:
                raise ValueError(f"{etype}: expected {len(self.features) + 1} coefficients")
            if self.alpha[etype] < 0:
                raise ValueError(f"{etype}: alpha must be non-negative")


def _cell_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def sample_nb2(mu: float, alpha: float, rng: np.random.Generator) -> int:
    """One NB2 draw via the Gamma-Poisson mixture; alpha = 0 is Poisson."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    lam = mu if alpha == 0 else rng.gamma(shape=1.0 / alpha, scale=alpha * mu)
    return int(rng.poisson(lam))


@dataclass
class Truth:
    """Planted parameters, persisted next to generated fixtures."""

    feature_names: list[str]
    coefficients: dict[str, list[float]]
    alpha: dict[str, float]
    seed: int
    period_kind: str
    exposure_t: float = 1.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "feature_names": self.feature_names,
                "coefficients": self.coefficients,
                "alpha": self.alpha,
                "seed": self.seed,
                "period_kind": self.period_kind,
                "exposure_t": self.exposure_t,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Truth":
        doc = json.loads(text)
        return cls(
            feature_names=list(doc["feature_names"]),
            coefficients={k: list(v) for k, v in doc["coefficients"].items()},
            alpha={k: float(v) for k, v in doc["alpha"].items()},
            seed=int(doc["seed"]),
            period_kind=doc["period_kind"],
            exposure_t=float(doc.get("exposure_t", 1.0)),
        )


def generate(spec: ScenarioSpec) -> tuple[Panel, list[EventRecord], FeatureTable, Truth]:
    """Materialize a scenario: joined panel, event stream, features, truth.

    The event stream places each cell's count uniformly inside its period,
    so re-aggregating the events reproduces the panel counts exactly.
    """
    region_ids = [f"R{i:03d}" for i in range(spec.n_regions)]
    feature_names = [f.name for f in spec.features]
    rng_feat = _cell_rng(spec.seed, 0)
    values = np.column_stack(
        [rng_feat.uniform(f.low, f.high, size=spec.n_regions) for f in spec.features]
    ) if spec.features else np.empty((spec.n_regions, 0))
    features = FeatureTable(region_ids, feature_names, values)

    start = spec.start or _DEFAULT_START[spec.period_kind]
    starts = [start]
    for _ in range(spec.n_periods):
        naive = starts[-1].replace(tzinfo=None)
        starts.append(_next_period(naive, spec.period_kind).replace(tzinfo=timezone.utc))
    period_seconds = [
        (starts[j + 1] - starts[j]).total_seconds() for j in range(spec.n_periods)
    ]

    event_types = sorted(spec.coefficients)
    observations: list[Observation] = []
    events: list[EventRecord] = []
    for i, rid in enumerate(region_ids):
        x = values[i]
        for m, etype in enumerate(event_types):
            b = np.asarray(spec.coefficients[etype], dtype=float)
            mu = spec.exposure_t * float(np.exp(b[0] + b[1:] @ x))
            a = spec.alpha[etype]
            for j in range(spec.n_periods):
                rng = _cell_rng(spec.seed, 1, i, j, m)
                y = sample_nb2(mu, a, rng)
                observations.append(
                    Observation(
                        region_id=rid,
                        period_start=starts[j],
                        period_kind=spec.period_kind,
                        event_type=etype,
                        count_y=y,
                        exposure_t=spec.exposure_t,
                        x=x,
                    )
                )
                if y:
                    offsets = np.sort(rng.uniform(0.0, period_seconds[j], size=y))
                    for q, off in enumerate(offsets):
                        events.append(
                            EventRecord(
                                event_id=f"E{i:03d}-{j:04d}-{etype}-{q:03d}",
                                dispatch_time=(starts[j] + timedelta(seconds=float(off))).replace(
                                    microsecond=0
                                ),
                                event_type=etype,
                                location=None,
                                region_id=rid,
                            )
                        )

    panel = Panel(
        feature_names=feature_names,
        observations=observations,
        period_kind=spec.period_kind,
        span=(starts[0], starts[spec.n_periods - 1]),
    )
    truth = Truth(
        feature_names=feature_names,
        coefficients={k: [float(v) for v in b] for k, b in spec.coefficients.items()},
        alpha={k: float(v) for k, v in spec.alpha.items()},
        seed=spec.seed,
        period_kind=spec.period_kind,
        exposure_t=spec.exposure_t,
    )
    return panel, events, features, truth


def write_events_csv(events: list[EventRecord], path, metadata: list[str] | None = None):
    """Events CSV in the canonical ingest layout."""
    import csv

    from .ingest import format_timestamp

    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in metadata or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["event_id", "dispatch_time", "event_type", "lon", "lat", "region_id"])
        for ev in events:
            lon = "" if ev.location is None else repr(float(ev.location[0]))
            lat = "" if ev.location is None else repr(float(ev.location[1]))
            writer.writerow(
                [ev.event_id, format_timestamp(ev.dispatch_time), ev.event_type, lon, lat,
                 ev.region_id or ""]
            )
