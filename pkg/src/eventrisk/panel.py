"""The (region x period x event type) observation grid.

Periods are calendar-aligned in a configurable timezone: weeks start
Monday 00:00, months and years on the first. Partial periods at the span
edges are dropped with a warning. Every cell of the grid is materialized,
zeros included, so downstream models see true zero counts.
"""

from __future__ import annotations

import csv
import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from zoneinfo import ZoneInfo

import numpy as np

from .errors import CutoffOutOfSpan, EmptySpan, MissingRegionFeatures
from .ingest import EVENT_TYPES, FeatureTable, format_timestamp, parse_timestamp

log = logging.getLogger(__name__)

PERIOD_KINDS = ("hourly", "daily", "weekly", "monthly", "yearly")


@dataclass(eq=False)
class Observation:
    region_id: str
    period_start: datetime  # aware UTC
    period_kind: str
    event_type: str
    count_y: int
    exposure_t: float = 1.0
    x: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass(eq=False)
class Panel:
    feature_names: list[str]
    observations: list[Observation]
    period_kind: str
    span: tuple[datetime, datetime]  # first and last period_start

    def __len__(self):
        return len(self.observations)

    @property
    def region_ids(self) -> list[str]:
        seen = dict.fromkeys(o.region_id for o in self.observations)
        return list(seen)

    @property
    def event_types(self) -> list[str]:
        seen = dict.fromkeys(o.event_type for o in self.observations)
        return list(seen)

    def slice(self, event_type: str) -> "Panel":
        obs = [o for o in self.observations if o.event_type == event_type]
        return Panel(list(self.feature_names), obs, self.period_kind, self.span)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Counts y, exposures t, and the design matrix X (no intercept)."""
        y = np.array([o.count_y for o in self.observations], dtype=float)
        t = np.array([o.exposure_t for o in self.observations], dtype=float)
        if self.feature_names:
            X = np.array([o.x for o in self.observations], dtype=float)
        else:
            X = np.empty((len(y), 0))
        return y, t, X


@dataclass(eq=False)
class Split:
    train: Panel
    test: Panel
    seed: int
    train_fraction: float


def _floor_period(dt: datetime, kind: str) -> datetime:
    """Floor a naive local datetime to its period boundary."""
    if kind == "hourly":
        return dt.replace(minute=0, second=0, microsecond=0)
    day = dt.replace(hour=0, minute=0, second=0, microsecond=0)
    if kind == "daily":
        return day
    if kind == "weekly":
        return day - timedelta(days=day.weekday())
    if kind == "monthly":
        return day.replace(day=1)
    if kind == "yearly":
        return day.replace(month=1, day=1)
    raise ValueError(f"unknown period kind {kind!r}")


def _next_period(dt: datetime, kind: str) -> datetime:
    if kind == "hourly":
        return dt + timedelta(hours=1)
    if kind == "daily":
        return dt + timedelta(days=1)
    if kind == "weekly":
        return dt + timedelta(days=7)
    if kind == "monthly":
        return dt.replace(year=dt.year + (dt.month == 12), month=dt.month % 12 + 1)
    if kind == "yearly":
        return dt.replace(year=dt.year + 1)
    raise ValueError(f"unknown period kind {kind!r}")


def period_boundaries(
    span: tuple[datetime, datetime],
    kind: str,
    tz: str = "UTC",
) -> list[datetime]:
    """Boundary instants (UTC) of the complete periods inside ``span``.

    Returns n+1 boundaries delimiting n periods. Partial leading/trailing
    periods are dropped with a warning.
    """
    zone = ZoneInfo(tz)
    start_local = span[0].astimezone(zone).replace(tzinfo=None)
    end_local = span[1].astimezone(zone).replace(tzinfo=None)
    first = _floor_period(start_local, kind)
    if first < start_local:
        log.warning("dropping partial leading %s period at span start", kind)
        first = _next_period(first, kind)
    bounds = []
    b = first
    while b <= end_local:
        bounds.append(b)
        b = _next_period(b, kind)
    if len(bounds) >= 1 and bounds[-1] < end_local:
        log.warning("dropping partial trailing %s period at span end", kind)
    if len(bounds) < 2:
        raise EmptySpan(f"span contains no complete {kind} period")
    return [dt.replace(tzinfo=zone).astimezone(timezone.utc) for dt in bounds]


def aggregate(
    events,
    regions,
    period_kind: str,
    span: tuple[datetime, datetime],
    event_types=None,
    tz: str = "UTC",
    combine_types_as: str | None = None,
) -> Panel:
    """Bucket events into a zero-materialized count panel (no features).

    Events must carry region_ids. With ``combine_types_as`` set, all event
    types collapse into one series under that label.
    """
    region_list = sorted(set(regions))
    if combine_types_as is not None:
        type_list = [combine_types_as]
    else:
        type_list = list(event_types) if event_types else list(EVENT_TYPES)
        unknown = [t for t in type_list if t not in EVENT_TYPES]
        if unknown:
            raise ValueError(f"unknown event types: {unknown}")
    bounds = period_boundaries(span, period_kind, tz)
    starts = bounds[:-1]
    bound_ts = [b.timestamp() for b in bounds]

    region_idx = {r: i for i, r in enumerate(region_list)}
    type_idx = {t: i for i, t in enumerate(type_list)}
    counts = np.zeros((len(region_list), len(starts), len(type_list)), dtype=int)
    for ev in events:
        i = region_idx.get(ev.region_id)
        if i is None:
            continue
        label = combine_types_as if combine_types_as is not None else ev.event_type
        k = type_idx.get(label)
        if k is None:
            continue
        ts = ev.dispatch_time.timestamp()
        j = bisect_right(bound_ts, ts) - 1
        if j < 0 or j >= len(starts):
            continue
        counts[i, j, k] += 1

    observations = [
        Observation(
            region_id=region_list[i],
            period_start=starts[j],
            period_kind=period_kind,
            event_type=type_list[k],
            count_y=int(counts[i, j, k]),
        )
        for i in range(len(region_list))
        for j in range(len(starts))
        for k in range(len(type_list))
    ]
    return Panel([], observations, period_kind, (starts[0], starts[-1]))


def join_features(
    panel: Panel,
    features: FeatureTable,
    subset: list[str] | None = None,
) -> Panel:
    """Attach each region's (time-invariant) covariate vector to its rows."""
    table = features.subset(subset) if subset is not None else features
    missing = sorted(set(panel.region_ids) - set(table.region_ids))
    if missing:
        raise MissingRegionFeatures(missing)
    lookup = {rid: table.values[i] for i, rid in enumerate(table.region_ids)}
    observations = [
        Observation(
            region_id=o.region_id,
            period_start=o.period_start,
            period_kind=o.period_kind,
            event_type=o.event_type,
            count_y=o.count_y,
            exposure_t=o.exposure_t,
            x=lookup[o.region_id],
        )
        for o in panel.observations
    ]
    return Panel(list(table.feature_names), observations, panel.period_kind, panel.span)


def split(panel: Panel, train_fraction: float, seed: int) -> Split:
    """Observation-level random split, deterministic for a fixed seed."""
    if not panel.observations:
        raise ValueError("cannot split an empty panel")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(panel.observations)
    k = int(np.floor(n * train_fraction + 0.5))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train_idx = np.sort(perm[:k])
    test_idx = np.sort(perm[k:])
    make = lambda idx: Panel(
        list(panel.feature_names),
        [panel.observations[i] for i in idx],
        panel.period_kind,
        panel.span,
    )
    return Split(train=make(train_idx), test=make(test_idx), seed=seed, train_fraction=train_fraction)


def split_by_date(panel: Panel, cutoff: datetime) -> tuple[Panel, Panel]:
    """Partition by period start: strictly-before vs at-or-after cutoff."""
    first, last = panel.span
    if cutoff <= first or cutoff > last:
        raise CutoffOutOfSpan(
            f"cutoff {format_timestamp(cutoff)} outside ({format_timestamp(first)}, {format_timestamp(last)}]"
        )
    before = [o for o in panel.observations if o.period_start < cutoff]
    after = [o for o in panel.observations if o.period_start >= cutoff]
    mk = lambda obs: Panel(
        list(panel.feature_names),
        obs,
        panel.period_kind,
        (
            min(o.period_start for o in obs),
            max(o.period_start for o in obs),
        ),
    )
    return mk(before), mk(after)


def write_panel(panel: Panel, path, metadata: list[str] | None = None):
    """Panel CSV: region_id,period_start,period_kind,event_type,count,exposure,<feature>..."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in metadata or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["region_id", "period_start", "period_kind", "event_type", "count", "exposure"]
            + list(panel.feature_names)
        )
        for o in panel.observations:
            writer.writerow(
                [
                    o.region_id,
                    format_timestamp(o.period_start),
                    o.period_kind,
                    o.event_type,
                    str(int(o.count_y)),
                    repr(float(o.exposure_t)),
                ]
                + [repr(float(v)) for v in o.x]
            )


def read_panel(path) -> Panel:
    """Inverse of :func:`write_panel`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        fixed = ["region_id", "period_start", "period_kind", "event_type", "count", "exposure"]
        if header[: len(fixed)] != fixed:
            raise ValueError(f"unexpected panel header: {header[:len(fixed)]}")
        feature_names = header[len(fixed):]
        observations = []
        kinds = set()
        for row in reader:
            if not row:
                continue
            kinds.add(row[2])
            observations.append(
                Observation(
                    region_id=row[0],
                    period_start=parse_timestamp(row[1], "UTC"),
                    period_kind=row[2],
                    event_type=row[3],
                    count_y=int(row[4]),
                    exposure_t=float(row[5]),
                    x=np.array([float(v) for v in row[len(fixed):]], dtype=float),
                )
            )
    if not observations:
        raise ValueError("panel file has no observations")
    if len(kinds) != 1:
        raise ValueError(f"panel mixes period kinds: {sorted(kinds)}")
    starts = [o.period_start for o in observations]
    return Panel(feature_names, observations, kinds.pop(), (min(starts), max(starts)))
