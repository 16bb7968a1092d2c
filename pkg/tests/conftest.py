"""Shared synthetic-city fixture: events, features, stations, geometry."""

import csv
import json

import numpy as np
import pytest

from eventrisk.ingest import format_timestamp
from eventrisk.simulate import FeatureSpec, ScenarioSpec, generate

LON0, LAT0, CELL = -113.6, 53.45, 0.02
GRID = 4  # 4x4 neighborhoods


def region_centroid(rid: str) -> tuple[float, float]:
    i, j = int(rid[1]), int(rid[2])
    return (LON0 + (i + 0.5) * CELL, LAT0 + (j + 0.5) * CELL)


@pytest.fixture(scope="session")
def city(tmp_path_factory):
    """A 16-neighborhood city with located events and station layout.

    Returns a dict of paths plus the planted truth. Events carry both
    coordinates (at their region centroid) and, for half of them, a
    pre-assigned region id; the other half must be resolved spatially.
    """
    root = tmp_path_factory.mktemp("city")
    region_ids = [f"N{i}{j}" for i in range(GRID) for j in range(GRID)]

    spec = ScenarioSpec(
        n_regions=len(region_ids),
        features=[FeatureSpec("f1", 0, 4), FeatureSpec("f2", 0, 4)],
        coefficients={"FR": [1.0, 0.5, -0.25], "MD": [1.5, 0.2, 0.1]},
        alpha={"FR": 0.5, "MD": 0.3},
        period_kind="weekly",
        n_periods=156,
        seed=8,
    )
    panel, events, features, truth = generate(spec)
    rename = {f"R{k:03d}": rid for k, rid in enumerate(region_ids)}

    events_path = root / "events.csv"
    with open(events_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_id", "dispatch_time", "event_type", "lon", "lat", "region_id"])
        for k, ev in enumerate(events):
            rid = rename[ev.region_id]
            lon, lat = region_centroid(rid)
            writer.writerow(
                [
                    ev.event_id,
                    format_timestamp(ev.dispatch_time),
                    ev.event_type,
                    repr(lon),
                    repr(lat),
                    rid if k % 2 == 0 else "",
                ]
            )

    features_path = root / "features.csv"
    with open(features_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_id", "f1", "f2"])
        for old, row in zip(features.region_ids, features.values):
            writer.writerow([rename[old]] + [repr(float(v)) for v in row])

    geometry_path = root / "regions.geojson"
    geo_features = []
    for rid in region_ids:
        i, j = int(rid[1]), int(rid[2])
        x0, y0 = LON0 + i * CELL, LAT0 + j * CELL
        ring = [[x0, y0], [x0 + CELL, y0], [x0 + CELL, y0 + CELL], [x0, y0 + CELL], [x0, y0]]
        geo_features.append(
            {
                "type": "Feature",
                "properties": {"region_id": rid},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    geometry_path.write_text(json.dumps({"type": "FeatureCollection", "features": geo_features}))

    stations_path = root / "stations.csv"
    rng = np.random.default_rng(13)
    with open(stations_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", "lon", "lat"])
        for k in range(5):
            lon = LON0 + float(rng.uniform(0.15, 0.85)) * GRID * CELL
            lat = LAT0 + float(rng.uniform(0.15, 0.85)) * GRID * CELL
            writer.writerow([f"ST{k}", repr(lon), repr(lat)])

    return {
        "root": root,
        "events": str(events_path),
        "features": str(features_path),
        "geometry": str(geometry_path),
        "stations": str(stations_path),
        "truth": truth,
        "region_ids": region_ids,
    }
