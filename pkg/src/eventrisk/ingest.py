"""Parsing of event, feature, station, and geometry inputs.

All analyses run offline from files; the only network entry point is
:func:`fetch_url_to_file`, which is disabled unless explicitly allowed.
CSV readers skip ``#`` comment lines so exported artifacts (which carry a
metadata header) re-parse cleanly.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from zoneinfo import ZoneInfo

import numpy as np

from .errors import (
    DuplicateRegion,
    EmptyTable,
    HttpStatus,
    NegativeValue,
    NetworkDisabled,
    UnknownCategory,
)

log = logging.getLogger(__name__)

#: The twelve dispatch category codes.
EVENT_TYPES = (
    "FR",  # fire
    "MD",  # medical
    "AL",  # alarms
    "CA",  # citizen assist
    "TA",  # motor vehicle incident
    "RC",  # rescue
    "OF",  # outside fire
    "VF",  # vehicle fire
    "HZ",  # hazardous materials
    "TM",  # training/maintenance
    "CM",  # community
    "XX",  # others
)

DEFAULT_TIMEZONE = "America/Edmonton"

#: PoI groups -> (OSM key, sub-tag values). Each group collapses related
#: sub-tags into a single count feature.
POI_CATEGORIES = {
    "Food": ("amenity", ("bar", "cafe", "fast_food", "food_court", "pub", "restaurant")),
    "Education": ("amenity", ("college", "kindergarten", "library", "school", "university")),
    "Healthcare": ("amenity", ("clinic", "hospital")),
    "Entertainment": (
        "amenity",
        ("arts_centre", "cinema", "community_centre", "events_venue", "nightclub", "theatre"),
    ),
    "Public Service": ("amenity", ("courthouse", "fire_station", "police", "townhall")),
    "Commercial": ("building", ("office", "commercial", "government")),
    "Retail": ("building", ("retail",)),
    "traffic_lights": ("highway", ("traffic_signals",)),
    "bus_stops": ("highway", ("bus_stop",)),
}


@dataclass
class EventRecord:
    """One dispatched incident."""

    event_id: str
    dispatch_time: datetime  # aware, UTC
    event_type: str
    location: tuple[float, float] | None = None  # (lon, lat) WGS84
    region_id: str | None = None


@dataclass
class RowError:
    """Structured per-row parse failure."""

    line: int
    code: str  # unknown_event_type | malformed_timestamp | missing_location | bad_coordinates
    message: str


@dataclass
class ParseResult:
    records: list[EventRecord]
    errors: list[RowError]


@dataclass
class EventColumns:
    """Column mapping for an events CSV."""

    event_id: str = "event_id"
    dispatch_time: str = "dispatch_time"
    event_type: str = "event_type"
    lon: str = "lon"
    lat: str = "lat"
    region_id: str = "region_id"


@dataclass
class FeatureTable:
    """Region -> named non-negative covariates, as a dense matrix."""

    region_ids: list[str]
    feature_names: list[str]
    values: np.ndarray  # shape (n_regions, n_features), float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.region_ids), len(self.feature_names)):
            raise ValueError("values shape does not match region/feature counts")
        if len(set(self.region_ids)) != len(self.region_ids):
            raise ValueError("region_ids not unique")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("feature_names not unique")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite feature values")
        if np.any(self.values < 0):
            raise ValueError("negative feature values")

    def row(self, region_id: str) -> np.ndarray:
        return self.values[self.region_ids.index(region_id)]

    def subset(self, names: list[str]) -> "FeatureTable":
        """Project onto the named features, in the requested order."""
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise KeyError(f"unknown features: {missing}")
        idx = [self.feature_names.index(n) for n in names]
        return FeatureTable(list(self.region_ids), list(names), self.values[:, idx])


@dataclass
class StationSet:
    """Fire stations as (id, WGS84 point)."""

    stations: list[tuple[str, tuple[float, float]]]

    def __post_init__(self):
        ids = [s for s, _ in self.stations]
        if len(set(ids)) != len(ids):
            raise ValueError("station ids not unique")
        pts = [p for _, p in self.stations]
        if len(set(pts)) != len(pts):
            raise ValueError("station points not pairwise distinct")

    @property
    def ids(self) -> list[str]:
        return [s for s, _ in self.stations]

    @property
    def points(self) -> np.ndarray:
        return np.array([p for _, p in self.stations], dtype=float)


@dataclass
class RegionGeometry:
    """A named simple polygon or multipolygon (WGS84 or planar rings)."""

    region_id: str
    # list of polygons; each polygon is a list of rings; each ring a list of
    # (x, y) pairs with first == last
    polygons: list[list[list[tuple[float, float]]]] = field(default_factory=list)


def _open_rows(path):
    fh = open(path, newline="", encoding="utf-8")
    filtered = (line for line in fh if not line.startswith("#"))
    return fh, csv.reader(filtered)


def parse_timestamp(text: str, tz: str = DEFAULT_TIMEZONE) -> datetime:
    """Parse an RFC 3339 timestamp; naive values are local time in ``tz``.

    Returns an aware UTC datetime at second precision.
    """
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=ZoneInfo(tz))
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    """RFC 3339 with trailing Z, second precision."""
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_events(
    path,
    columns: EventColumns | None = None,
    tz: str = DEFAULT_TIMEZONE,
) -> ParseResult:
    """Parse an events CSV into records plus structured row errors.

    Every data row maps to exactly one record or one error; input order is
    preserved. Unknown extra columns are ignored with a warning.
    """
    columns = columns or EventColumns()
    records: list[EventRecord] = []
    errors: list[RowError] = []
    fh, reader = _open_rows(path)
    with fh:
        header = next(reader, None)
        if header is None:
            return ParseResult(records, errors)
        header = [h.strip() for h in header]
        wanted = {
            columns.event_id,
            columns.dispatch_time,
            columns.event_type,
            columns.lon,
            columns.lat,
            columns.region_id,
        }
        extra = [h for h in header if h not in wanted]
        if extra:
            log.warning("ignoring unknown event columns: %s", ", ".join(extra))
        col = {name: header.index(name) for name in header}

        def get(row, name):
            i = col.get(name)
            if i is None or i >= len(row):
                return ""
            return row[i].strip()

        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            etype = get(row, columns.event_type)
            if etype not in EVENT_TYPES:
                errors.append(
                    RowError(line_no, "unknown_event_type", f"event type {etype!r}")
                )
                continue
            try:
                when = parse_timestamp(get(row, columns.dispatch_time), tz)
            except ValueError:
                errors.append(
                    RowError(
                        line_no,
                        "malformed_timestamp",
                        f"bad timestamp {get(row, columns.dispatch_time)!r}",
                    )
                )
                continue
            lon_s, lat_s = get(row, columns.lon), get(row, columns.lat)
            region = get(row, columns.region_id) or None
            location = None
            if lon_s or lat_s:
                try:
                    lon, lat = float(lon_s), float(lat_s)
                except ValueError:
                    errors.append(
                        RowError(line_no, "bad_coordinates", f"bad lon/lat {lon_s!r},{lat_s!r}")
                    )
                    continue
                if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
                    errors.append(
                        RowError(line_no, "bad_coordinates", f"lon/lat out of range {lon},{lat}")
                    )
                    continue
                location = (lon, lat)
            if location is None and region is None:
                errors.append(
                    RowError(line_no, "missing_location", "neither coordinates nor region_id")
                )
                continue
            records.append(
                EventRecord(
                    event_id=get(row, columns.event_id),
                    dispatch_time=when,
                    event_type=etype,
                    location=location,
                    region_id=region,
                )
            )
    return ParseResult(records, errors)


def parse_feature_table(path) -> FeatureTable:
    """Parse a features CSV (``region_id,<feature>...``).

    Missing, non-finite, or negative cells are rejected, never imputed.
    """
    fh, reader = _open_rows(path)
    with fh:
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise EmptyTable("feature table needs a region_id column and one feature")
        feature_names = [h.strip() for h in header[1:]]
        region_ids: list[str] = []
        rows: list[list[float]] = []
        seen: set[str] = set()
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            rid = row[0].strip()
            if rid in seen:
                raise DuplicateRegion(rid, line_no)
            seen.add(rid)
            vals = []
            for j, cell in enumerate(row[1:], start=1):
                text = cell.strip()
                if not text:
                    raise EmptyTable(f"missing value at row {line_no}, column {j}")
                v = float(text)
                if not np.isfinite(v):
                    raise EmptyTable(f"non-finite value at row {line_no}, column {j}")
                if v < 0:
                    raise NegativeValue(line_no, j, v)
                vals.append(v)
            if len(vals) != len(feature_names):
                raise EmptyTable(f"row {line_no} has {len(vals)} values, expected {len(feature_names)}")
            region_ids.append(rid)
            rows.append(vals)
    if not rows:
        raise EmptyTable("feature table has no data rows")
    return FeatureTable(region_ids, feature_names, np.array(rows, dtype=float))


def write_feature_table(table: FeatureTable, path, metadata: list[str] | None = None):
    """Write a FeatureTable to CSV; round-trips exactly through the parser."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in metadata or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["region_id"] + list(table.feature_names))
        for rid, row in zip(table.region_ids, table.values):
            writer.writerow([rid] + [repr(float(v)) for v in row])


def parse_stations(path) -> StationSet:
    """Parse a stations CSV (``station_id,lon,lat``)."""
    fh, reader = _open_rows(path)
    stations = []
    with fh:
        header = next(reader, None)
        if header is None:
            raise EmptyTable("stations file is empty")
        col = {h.strip(): i for i, h in enumerate(header)}
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            stations.append(
                (
                    row[col["station_id"]].strip(),
                    (float(row[col["lon"]]), float(row[col["lat"]])),
                )
            )
    return StationSet(stations)


def parse_regions_geojson(path) -> list[RegionGeometry]:
    """Parse a GeoJSON FeatureCollection with ``region_id`` properties."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    regions = []
    for feature in doc.get("features", []):
        rid = str(feature["properties"]["region_id"])
        geom = feature["geometry"]
        if geom["type"] == "Polygon":
            polys = [geom["coordinates"]]
        elif geom["type"] == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            raise ValueError(f"unsupported geometry type {geom['type']!r} for {rid}")
        regions.append(
            RegionGeometry(
                region_id=rid,
                polygons=[[[tuple(pt) for pt in ring] for ring in poly] for poly in polys],
            )
        )
    return regions


def build_overpass_query(
    category: str,
    bbox: tuple[float, float, float, float] | None = None,
    timeout: int = 180,
) -> str:
    """Build an Overpass QL query for one PoI group.

    ``bbox`` is (south, west, north, east); omitted means an unbounded
    query. Output is byte-identical across runs for the same arguments.
    """
    if category not in POI_CATEGORIES:
        raise UnknownCategory(
            f"{category!r}; expected one of {', '.join(sorted(POI_CATEGORIES))}"
        )
    key, values = POI_CATEGORIES[category]
    box = "" if bbox is None else "({},{},{},{})".format(*(repr(float(v)) for v in bbox))
    selectors = "".join(f'  nwr["{key}"="{value}"]{box};\n' for value in values)
    return f"[out:json][timeout:{timeout}];\n(\n{selectors});\nout center;\n"


def fetch_url_to_file(url: str, dest_path, allow_network: bool = False) -> int:
    """Download ``url`` to ``dest_path`` atomically; returns bytes written.

    Refuses to touch the network unless ``allow_network`` is set.
    """
    if not allow_network:
        raise NetworkDisabled("network fetch requires the explicit allow-network flag")
    if not url.startswith(("http://", "https://")):
        raise ValueError(f"unsupported URL scheme: {url!r}")
    dest_dir = os.path.dirname(os.path.abspath(dest_path)) or "."
    try:
        response = urllib.request.urlopen(url)  # noqa: S310 (scheme checked above)
    except urllib.error.HTTPError as exc:
        raise HttpStatus(exc.code, url) from exc
    with response:
        status = getattr(response, "status", 200)
        if status != 200:
            raise HttpStatus(status, url)
        fd, tmp = tempfile.mkstemp(dir=dest_dir, suffix=".part")
        n = 0
        try:
            with os.fdopen(fd, "wb") as out:
                while True:
                    chunk = response.read(io.DEFAULT_BUFFER_SIZE)
                    if not chunk:
                        break
                    out.write(chunk)
                    n += len(chunk)
            os.replace(tmp, dest_path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    return n
