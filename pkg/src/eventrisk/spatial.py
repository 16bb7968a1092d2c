"""Station service areas and feature redistribution.

All geometry here is planar. City-scale WGS84 inputs are first projected
with :class:`AzimuthalProjection` (azimuthal equidistant about a local
origin), so planar distances match great-circle distances to well under
0.1% across a metropolitan extent.

Voronoi cells are built by half-plane intersection per station (the
station count is tiny, so robustness beats asymptotics); general polygon
intersection and areas are delegated to shapely.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon, Point, box, mapping
from shapely.geometry.polygon import orient

from .errors import (
    DegenerateBoundary,
    DuplicateStationPoints,
    ExtentTooLarge,
    RegionMismatch,
    ZeroAreaNeighborhood,
)
from .ingest import FeatureTable, RegionGeometry

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8
MAX_RADIUS_M = 250_000.0  # points farther from the origin imply a >500 km span


class AzimuthalProjection:
    """Azimuthal equidistant projection about a fixed WGS84 origin.

    Distances from the origin are preserved exactly (spherical model);
    the origin itself maps to (0, 0).
    """

    def __init__(self, origin_lonlat: tuple[float, float]):
        self.origin = (float(origin_lonlat[0]), float(origin_lonlat[1]))
        self._lam0 = np.radians(self.origin[0])
        self._phi0 = np.radians(self.origin[1])

    @classmethod
    def for_points(cls, points) -> "AzimuthalProjection":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls((pts[:, 0].mean(), pts[:, 1].mean()))

    def forward(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        lam = np.radians(pts[:, 0])
        phi = np.radians(pts[:, 1])
        dlam = lam - self._lam0
        cos_c = np.sin(self._phi0) * np.sin(phi) + np.cos(self._phi0) * np.cos(phi) * np.cos(dlam)
        c = np.arccos(np.clip(cos_c, -1.0, 1.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            k = np.where(c > 0, c / np.sin(c), 1.0)
        x = EARTH_RADIUS_M * k * np.cos(phi) * np.sin(dlam)
        y = EARTH_RADIUS_M * k * (
            np.cos(self._phi0) * np.sin(phi) - np.sin(self._phi0) * np.cos(phi) * np.cos(dlam)
        )
        radius = EARTH_RADIUS_M * c
        if np.any(radius > MAX_RADIUS_M):
            raise ExtentTooLarge(
                f"point {radius.max() / 1000.0:.0f} km from projection origin (limit 250 km)"
            )
        return np.column_stack([x, y])

    def inverse(self, xy) -> np.ndarray:
        pts = np.asarray(xy, dtype=float).reshape(-1, 2)
        x, y = pts[:, 0], pts[:, 1]
        rho = np.hypot(x, y)
        c = rho / EARTH_RADIUS_M
        sin_c, cos_c = np.sin(c), np.cos(c)
        with np.errstate(invalid="ignore", divide="ignore"):
            phi = np.where(
                rho > 0,
                np.arcsin(cos_c * np.sin(self._phi0) + y * sin_c * np.cos(self._phi0) / np.where(rho > 0, rho, 1.0)),
                self._phi0,
            )
            lam = np.where(
                rho > 0,
                self._lam0
                + np.arctan2(x * sin_c, rho * cos_c * np.cos(self._phi0) - y * sin_c * np.sin(self._phi0)),
                self._lam0,
            )
        return np.column_stack([np.degrees(lam), np.degrees(phi)])

    def transform_geometry(self, geom):
        """Project a shapely geometry into the plane."""
        return shapely.transform(geom, lambda coords: self.forward(coords))

    def inverse_geometry(self, geom):
        """Map a planar shapely geometry back to WGS84."""
        return shapely.transform(geom, lambda coords: self.inverse(coords))


def project_to_plane(points, origin: tuple[float, float] | None = None) -> np.ndarray:
    """Project WGS84 (lon, lat) points to planar meters.

    The origin defaults to the centroid of the inputs and maps to (0, 0).
    Raises ExtentTooLarge when the inputs span more than ~500 km.
    """
    proj = AzimuthalProjection(origin) if origin else AzimuthalProjection.for_points(points)
    return proj.forward(points)


def haversine_m(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in meters between two (lon, lat) points."""
    lam1, phi1 = np.radians(a)
    lam2, phi2 = np.radians(b)
    s = np.sin((phi2 - phi1) / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin((lam2 - lam1) / 2) ** 2
    return float(2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(s)))


def region_to_shapely(region: RegionGeometry):
    """Convert a RegionGeometry to a shapely (Multi)Polygon."""
    polys = [Polygon(p[0], p[1:]) for p in region.polygons]
    return polys[0] if len(polys) == 1 else MultiPolygon(polys)


@dataclass
class VoronoiPartition:
    """Nearest-station cells clipped to a bounding region."""

    cells: list[tuple[str, object]]  # (station_id, shapely polygon)
    bounding_region: object
    station_points: np.ndarray  # (n, 2), aligned with cells

    @property
    def station_ids(self) -> list[str]:
        return [sid for sid, _ in self.cells]

    def area_mismatch(self) -> float:
        """Relative difference between the cell-area sum and the boundary area."""
        total = sum(cell.area for _, cell in self.cells)
        return abs(total - self.bounding_region.area) / self.bounding_region.area


def _clip_halfplane(vertices: np.ndarray, a: float, b: float, c: float) -> np.ndarray:
    """Clip a convex polygon to {(x, y): a*x + b*y <= c} (Sutherland-Hodgman)."""
    if len(vertices) == 0:
        return vertices
    out = []
    f = vertices @ np.array([a, b]) - c
    n = len(vertices)
    for i in range(n):
        j = (i + 1) % n
        p, q = vertices[i], vertices[j]
        fp, fq = f[i], f[j]
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return np.array(out) if out else np.empty((0, 2))


def voronoi(
    station_ids: list[str],
    station_points,
    bounding_region,
) -> VoronoiPartition:
    """Partition a bounding polygon into nearest-station cells.

    Each cell is the intersection of the half-planes nearer to its station
    than to any other, clipped to the bounding region.
    """
    pts = np.asarray(station_points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("at least one station required")
    if len(np.unique(pts, axis=0)) != len(pts):
        raise DuplicateStationPoints("two stations share identical coordinates")
    if bounding_region.is_empty or bounding_region.area <= 0 or not bounding_region.is_valid:
        raise DegenerateBoundary("bounding region empty, invalid, or zero-area")
    for sid, p in zip(station_ids, pts):
        if not bounding_region.intersects(Point(p)):
            raise ValueError(f"station {sid!r} lies outside the bounding region")

    minx, miny, maxx, maxy = bounding_region.bounds
    pad = 0.5 * max(maxx - minx, maxy - miny) + 1.0
    hull = np.array(
        [
            [minx - pad, miny - pad],
            [maxx + pad, miny - pad],
            [maxx + pad, maxy + pad],
            [minx - pad, maxy + pad],
        ]
    )
    cells = []
    for k, sk in enumerate(pts):
        verts = hull.copy()
        for j, sj in enumerate(pts):
            if j == k:
                continue
            d = sj - sk
            a, b = 2.0 * d
            c = float(sj @ sj - sk @ sk)
            verts = _clip_halfplane(verts, a, b, c)
            if len(verts) < 3:
                break
        cell = Polygon(verts) if len(verts) >= 3 else Polygon()
        cell = cell.intersection(bounding_region)
        cells.append((station_ids[k], cell))
    return VoronoiPartition(cells=cells, bounding_region=bounding_region, station_points=pts)


@dataclass
class OverlapMatrix:
    """Fraction of each neighborhood's area inside each station cell."""

    rows: list[str]  # neighborhood region_ids
    cols: list[str]  # station_ids
    w: np.ndarray  # (n_rows, n_cols), rows sum to 1

    def row_sums(self) -> np.ndarray:
        return self.w.sum(axis=1)

    def to_csv(self, path, metadata: list[str] | None = None):
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in metadata or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["region_id"] + list(self.cols))
            for rid, row in zip(self.rows, self.w):
                writer.writerow([rid] + [repr(float(v)) for v in row])


def overlap_matrix(
    neighborhoods: list[tuple[str, object]],
    partition: VoronoiPartition,
    clip_warn_tol: float = 1e-9,
) -> OverlapMatrix:
    """Compute area-overlap fractions of neighborhoods against cells.

    Neighborhoods extending past the bounding region are clipped (with a
    warning); fractions are taken over the clipped area so each row sums
    to one.
    """
    rows = [rid for rid, _ in neighborhoods]
    cols = partition.station_ids
    w = np.zeros((len(rows), len(cols)))
    for i, (rid, geom) in enumerate(neighborhoods):
        if geom.is_empty or geom.area <= 0:
            raise ZeroAreaNeighborhood(rid)
        clipped = geom.intersection(partition.bounding_region)
        if clipped.area <= 0:
            raise ZeroAreaNeighborhood(rid)
        loss = 1.0 - clipped.area / geom.area
        if loss > clip_warn_tol:
            log.warning("neighborhood %s clipped to bounding region (%.3g%% outside)", rid, 100 * loss)
        for j, (_, cell) in enumerate(partition.cells):
            if cell.is_empty:
                continue
            w[i, j] = clipped.intersection(cell).area / clipped.area
    return OverlapMatrix(rows=rows, cols=cols, w=w)


def redistribute_features(features: FeatureTable, overlap: OverlapMatrix) -> FeatureTable:
    """Distribute neighborhood feature totals onto stations.

    Station value f[j] = sum_i w[i][j] * f[i]; citywide column totals are
    conserved because overlap rows sum to one.
    """
    if set(features.region_ids) != set(overlap.rows):
        missing = set(overlap.rows) ^ set(features.region_ids)
        raise RegionMismatch(f"feature rows and overlap rows differ: {sorted(missing)}")
    order = [features.region_ids.index(rid) for rid in overlap.rows]
    aligned = features.values[order]
    station_values = overlap.w.T @ aligned
    return FeatureTable(list(overlap.cols), list(features.feature_names), station_values)


def assign_region(point: tuple[float, float], regions: list[tuple[str, object]]) -> str | None:
    """Return the region containing the point, or None.

    Boundary points resolve to the lexicographically smallest region_id
    among the touching regions, for determinism.
    """
    p = Point(point)
    hits = [rid for rid, geom in regions if geom.covers(p)]
    return min(hits) if hits else None


def assign_events(events, regions: list[tuple[str, object]], projection=None):
    """Fill missing region_ids on events via point-in-polygon lookup.

    ``regions`` must be in the same coordinate system as the event
    locations (pass a projection to test planar regions against WGS84
    event points). Events with neither a region nor a resolvable location
    keep region_id None.
    """
    out = []
    for ev in events:
        if ev.region_id is None and ev.location is not None:
            loc = ev.location
            if projection is not None:
                loc = tuple(projection.forward([loc])[0])
            rid = assign_region(loc, regions)
            ev = type(ev)(
                event_id=ev.event_id,
                dispatch_time=ev.dispatch_time,
                event_type=ev.event_type,
                location=ev.location,
                region_id=rid,
            )
        out.append(ev)
    return out


def partition_to_geojson(partition: VoronoiPartition, projection=None) -> dict:
    """Voronoi partition as a GeoJSON FeatureCollection (station_id property)."""
    features = []
    for sid, cell in partition.cells:
        geom = cell
        if projection is not None:
            geom = projection.inverse_geometry(geom)
        if not geom.is_empty:
            geom = _oriented(geom)
        features.append(
            {
                "type": "Feature",
                "properties": {"station_id": sid},
                "geometry": mapping(geom),
            }
        )
    return {"type": "FeatureCollection", "features": features}


def regions_to_geojson(
    regions: list[tuple[str, object]],
    properties: dict[str, dict] | None = None,
    projection=None,
) -> dict:
    """Named polygons (plus optional per-region properties) as GeoJSON."""
    features = []
    for rid, geom in regions:
        if projection is not None:
            geom = projection.inverse_geometry(geom)
        props = {"region_id": rid}
        if properties and rid in properties:
            props.update(properties[rid])
        features.append(
            {
                "type": "Feature",
                "properties": props,
                "geometry": mapping(_oriented(geom)),
            }
        )
    return {"type": "FeatureCollection", "features": features}


def _oriented(geom):
    if geom.geom_type == "Polygon":
        return orient(geom, sign=1.0)
    if geom.geom_type == "MultiPolygon":
        return MultiPolygon([orient(p, sign=1.0) for p in geom.geoms])
    return geom


def square(minx: float, miny: float, maxx: float, maxy: float) -> Polygon:
    """Axis-aligned rectangle, convenience for tests and fixtures."""
    return box(minx, miny, maxx, maxy)
