"""Command-line pipeline: ingest files in, artifacts out.

Every subcommand reads its inputs fresh, writes artifacts atomically into
--out, and stamps them with the tool version, seed, and a hash of the
semantic configuration (paths excluded, so runs in different directories
compare byte-for-byte). All randomness flows from the single seed.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import timedelta

import click
import numpy as np

from . import __version__, errors
from . import figures
from .describe import correlation_matrix as build_correlation_matrix
from .describe import describe as describe_stats
from .describe import residual_ecdf, write_descriptive_rows
from .classify import classify_regions
from .evaluate import compare_periods as compare_periods_fn
from .evaluate import evaluate_model, write_metric_reports
from .importance import ForestConfig, rank_features
from .ingest import (
    EVENT_TYPES,
    parse_events,
    parse_feature_table,
    parse_regions_geojson,
    parse_stations,
    parse_timestamp,
    write_feature_table,
)
from .nb2 import FitOptions, fit_panel, model_from_json, model_to_json, predict
from .panel import aggregate, join_features, split
from .simulate import FeatureSpec, ScenarioSpec, generate, write_events_csv
from .spatial import (
    AzimuthalProjection,
    assign_region,
    overlap_matrix,
    redistribute_features,
    region_to_shapely,
    regions_to_geojson,
    partition_to_geojson,
    voronoi,
)

PERIODS = ("hourly", "daily", "weekly", "monthly", "yearly")


@dataclass
class RunConfig:
    events: str | None = None
    features: str | None = None
    stations: str | None = None
    geometry: str | None = None
    timezone: str = "America/Edmonton"
    period: str = "weekly"
    types: list[str] = field(default_factory=lambda: ["ALL"])
    span: tuple[str, str] | None = None
    train_fraction: float = 0.7
    seed: int = 0
    features_subset: object = None  # None (all) | "auto" | list of names
    out: str = "out"
    allow_network: bool = False
    overpass_url: str = "https://overpass-api.de/api/interpreter"
    granularity: str = "neighborhood"
    k_classes: int = 4
    trees: int = 1000
    importance_threshold: float = 0.05
    regions_include: list[str] | None = None
    scenario: dict | None = None

    def config_hash(self) -> str:
        # hash the semantic knobs only; file locations must not change it
        semantic = {
            "timezone": self.timezone,
            "period": self.period,
            "types": self.types,
            "span": self.span,
            "train_fraction": self.train_fraction,
            "seed": self.seed,
            "features_subset": self.features_subset,
            "granularity": self.granularity,
            "k_classes": self.k_classes,
            "trees": self.trees,
            "importance_threshold": self.importance_threshold,
            "regions_include": self.regions_include,
            "scenario": self.scenario,
        }
        blob = json.dumps(semantic, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def metadata_lines(self) -> list[str]:
        return [f"eventrisk {__version__}", f"seed={self.seed}", f"config={self.config_hash()}"]

    def metadata_dict(self) -> dict:
        return {
            "tool": "eventrisk",
            "version": __version__,
            "seed": self.seed,
            "config": self.config_hash(),
        }


def _load_config(path: str | None, **overrides) -> RunConfig:
    doc = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**doc)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if cfg.period not in PERIODS:
        raise ValueError(f"unknown period {cfg.period!r}")
    bad = [t for t in cfg.types if t != "ALL" and t not in EVENT_TYPES]
    if bad:
        raise ValueError(f"unknown event types: {bad}")
    return cfg


def _parse_types(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def _parse_features_flag(text: str | None):
    if text is None:
        return None
    if text == "auto":
        return "auto"
    return [t.strip() for t in text.split(",") if t.strip()]


def _out_path(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _atomic(path: str, write_fn):
    """Write through a temp file in the same directory, then rename.

    The temp file keeps the target's extension; some writers (matplotlib)
    pick their format from it.
    """
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=os.path.splitext(path)[1] or ".part")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_json(cfg: RunConfig, path: str, doc: dict):
    doc = dict(doc)
    doc.setdefault("metadata", cfg.metadata_dict())
    _atomic(path, lambda tmp: _write_text(tmp, json.dumps(doc, indent=2, sort_keys=True) + "\n"))


def _write_run_metadata(cfg: RunConfig, command: str, artifacts: list[str]):
    doc = cfg.metadata_dict()
    doc["command"] = command
    doc["artifacts"] = sorted(os.path.basename(a) for a in artifacts)
    path = _out_path(cfg, "run_metadata.json")
    _atomic(path, lambda tmp: _write_text(tmp, json.dumps(doc, indent=2, sort_keys=True) + "\n"))


def _require(cfg: RunConfig, *fields):
    for name in fields:
        value = getattr(cfg, name)
        if not value:
            raise ValueError(f"missing required input: {name} (flag or config key)")
        if name in ("events", "features", "stations", "geometry") and not os.path.exists(value):
            raise ValueError(f"{name} path does not exist: {value}")


def _load_events(cfg: RunConfig):
    result = parse_events(cfg.events, tz=cfg.timezone)
    if result.errors:
        click.echo(f"warning: {len(result.errors)} unparseable event rows skipped", err=True)
        if not result.records:
            raise ValueError("no event rows parsed successfully")
    return result.records


def _assign_missing_regions(cfg: RunConfig, events):
    if not cfg.geometry:
        return events
    regions = [(r.region_id, region_to_shapely(r)) for r in parse_regions_geojson(cfg.geometry)]
    out = []
    for ev in events:
        if ev.region_id is None and ev.location is not None:
            rid = assign_region(ev.location, regions)
            ev = type(ev)(ev.event_id, ev.dispatch_time, ev.event_type, ev.location, rid)
        out.append(ev)
    return out


def _span(cfg: RunConfig, events):
    if cfg.span:
        return (parse_timestamp(cfg.span[0], cfg.timezone), parse_timestamp(cfg.span[1], cfg.timezone))
    times = [e.dispatch_time for e in events]
    if not times:
        raise ValueError("no events to derive a span from; set span in the config")
    return (min(times), max(times) + timedelta(seconds=1))


def _station_setup(cfg: RunConfig):
    """Voronoi partition plus overlap matrix in a local planar frame."""
    _require(cfg, "stations", "geometry")
    stations = parse_stations(cfg.stations)
    neighborhoods = [(r.region_id, region_to_shapely(r)) for r in parse_regions_geojson(cfg.geometry)]
    proj = AzimuthalProjection.for_points(stations.points)
    planar_stations = proj.forward(stations.points)
    import shapely.ops

    boundary = shapely.ops.unary_union([proj.transform_geometry(g) for _, g in neighborhoods])
    part = voronoi(stations.ids, planar_stations, boundary)
    planar_neigh = [(rid, proj.transform_geometry(g)) for rid, g in neighborhoods]
    overlap = overlap_matrix(planar_neigh, part)
    return stations, part, overlap, proj, planar_neigh


def _assign_stations(events, stations, proj):
    """Map located events to their nearest station's service area."""
    ids = stations.ids
    planar = proj.forward(stations.points)
    out = []
    dropped = 0
    for ev in events:
        if ev.location is None:
            dropped += 1
            continue
        xy = proj.forward([ev.location])[0]
        k = int(np.argmin(((planar - xy) ** 2).sum(axis=1)))
        out.append(type(ev)(ev.event_id, ev.dispatch_time, ev.event_type, ev.location, ids[k]))
    if dropped:
        click.echo(f"warning: {dropped} events without coordinates dropped for station panel", err=True)
    return out


def _build_panel(cfg: RunConfig):
    """events + features -> joined panel at the configured granularity."""
    _require(cfg, "events", "features")
    events = _load_events(cfg)
    features = parse_feature_table(cfg.features)
    if cfg.granularity == "station":
        stations, part, overlap, proj, _ = _station_setup(cfg)
        features = redistribute_features(features, overlap)
        events = _assign_stations(events, stations, proj)
    else:
        events = _assign_missing_regions(cfg, events)
    regions = [r for r in features.region_ids]
    if cfg.regions_include:
        regions = [r for r in regions if r in set(cfg.regions_include)]
    known = set(regions)
    lost = sum(1 for e in events if e.region_id not in known)
    if lost:
        click.echo(f"warning: {lost} events outside the feature-table regions ignored", err=True)
    combine = "ALL" if cfg.types == ["ALL"] else None
    panel = aggregate(
        events,
        regions,
        cfg.period,
        _span(cfg, events),
        event_types=None if combine else cfg.types,
        tz=cfg.timezone,
        combine_types_as=combine,
    )
    return join_features(panel, features), features


def _subset_for(cfg: RunConfig, panel, etype: str):
    """Resolve the feature subset: explicit list, auto-selection, or all."""
    subset = cfg.features_subset
    if subset is None:
        return list(panel.feature_names)
    if subset == "auto":
        totals: dict[str, float] = {}
        feats: dict[str, np.ndarray] = {}
        for o in panel.observations:
            if o.event_type != etype:
                continue
            totals[o.region_id] = totals.get(o.region_id, 0.0) + o.count_y
            feats.setdefault(o.region_id, o.x)
        regions = sorted(totals)
        X = np.array([feats[r] for r in regions])
        y = np.array([totals[r] for r in regions])
        report = rank_features(
            X, y, list(panel.feature_names),
            ForestConfig(n_trees=cfg.trees, seed=cfg.seed),
            threshold=cfg.importance_threshold,
        )
        return report.selected
    missing = [n for n in subset if n not in panel.feature_names]
    if missing:
        raise errors.FeatureNameMismatch(f"unknown features requested: {missing}")
    return list(subset)


@click.group()
@click.version_option(__version__, prog_name="eventrisk")
def cli():
    """Emergency-event count modeling pipeline."""


CONFIG_OPTS = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="JSON config file; flags override its keys."),
    click.option("--events", type=click.Path(), default=None, help="Events CSV path."),
    click.option("--features-file", "features_path", type=click.Path(), default=None,
                 help="Feature table CSV path."),
    click.option("--stations", type=click.Path(), default=None, help="Stations CSV path."),
    click.option("--geometry", type=click.Path(), default=None, help="Region GeoJSON path."),
    click.option("--seed", type=int, default=None, help="Master seed for all randomness."),
    click.option("--timezone", "timezone_flag", default=None,
                 help="IANA timezone for naive timestamps and period boundaries."),
    click.option("--period", type=click.Choice(PERIODS), default=None),
    click.option("--types", "types_flag", default=None,
                 help="Comma-separated event type codes, or ALL to combine."),
    click.option("--granularity", type=click.Choice(["neighborhood", "station"]), default=None),
    click.option("--features", "features_flag", default=None,
                 help="'auto' or comma-separated feature names for the model."),
    click.option("--train-fraction", type=float, default=None),
    click.option("--allow-network", is_flag=True, default=False),
    click.option("--out", default=None, help="Output directory."),
]


def with_config(fn):
    for opt in reversed(CONFIG_OPTS):
        fn = opt(fn)
    return fn


def _cfg_from_params(config_path, events, features_path, stations, geometry, seed,
                     timezone_flag, period, types_flag, granularity, features_flag,
                     train_fraction, allow_network, out):
    return _load_config(
        config_path,
        events=events,
        features=features_path,
        stations=stations,
        geometry=geometry,
        seed=seed,
        timezone=timezone_flag,
        period=period,
        types=_parse_types(types_flag),
        granularity=granularity,
        features_subset=_parse_features_flag(features_flag),
        train_fraction=train_fraction,
        allow_network=True if allow_network else None,
        out=out,
    )


def _sorted_types(cfg: RunConfig) -> list[str]:
    return sorted(cfg.types) if cfg.types != ["ALL"] else ["ALL"]


@cli.command()
@with_config
@click.option("--regions", "n_regions", type=int, default=None, help="Synthetic region count.")
@click.option("--periods", "n_periods", type=int, default=None, help="Synthetic period count.")
def simulate(n_regions, n_periods, **params):
    """Generate a synthetic city fixture with planted model parameters."""
    cfg = _cfg_from_params(**params)
    scenario = cfg.scenario or {}
    features = [
        FeatureSpec(f["name"], f.get("low", 0.0), f.get("high", 4.0))
        for f in scenario.get(
            "features", [{"name": "f1", "low": 0, "high": 4}, {"name": "f2", "low": 0, "high": 4}]
        )
    ]
    coefficients = scenario.get(
        "coefficients", {"FR": [1.0, 0.5, -0.25], "MD": [1.5, 0.2, 0.1]}
    )
    alpha = scenario.get("alpha", {"FR": 0.5, "MD": 0.3})
    spec = ScenarioSpec(
        n_regions=n_regions or scenario.get("n_regions", 40),
        features=features,
        coefficients=coefficients,
        alpha=alpha,
        period_kind=cfg.period,
        n_periods=n_periods or scenario.get("n_periods", 60),
        seed=cfg.seed,
        exposure_t=scenario.get("exposure_t", 1.0),
    )
    _, events, table, truth = generate(spec)
    lines = cfg.metadata_lines()
    paths = [_out_path(cfg, n) for n in ("events.csv", "features.csv", "truth.json")]
    _atomic(paths[0], lambda tmp: write_events_csv(events, tmp, metadata=lines))
    _atomic(paths[1], lambda tmp: write_feature_table(table, tmp, metadata=lines))
    _atomic(paths[2], lambda tmp: _write_text(tmp, truth.to_json()))
    _write_run_metadata(cfg, "simulate", paths)
    click.echo(f"simulated {len(events)} events over {spec.n_regions} regions -> {cfg.out}")


@cli.command()
@with_config
@click.option("--level", type=click.Choice(["city", "region", "both"]), default="both")
def describe(level, **params):
    """Descriptive statistics of event counts per period."""
    cfg = _cfg_from_params(**params)
    _require(cfg, "events")
    events = _load_events(cfg)
    regions = sorted({e.region_id for e in events if e.region_id})
    if not regions:
        raise ValueError("events carry no region ids; describe needs regions")
    kinds = [cfg.period] if params.get("period") else list(PERIODS)
    span = _span(cfg, events)
    all_rows = {"city": [], "region": []}
    for kind in kinds:
        try:
            panel = aggregate(events, regions, kind, span, tz=cfg.timezone,
                              combine_types_as="ALL" if cfg.types == ["ALL"] else None,
                              event_types=None if cfg.types == ["ALL"] else cfg.types)
        except errors.EmptySpan:
            click.echo(f"warning: span holds no complete {kind} period; skipped", err=True)
            continue
        for lv in ("city", "region"):
            if level in (lv, "both"):
                all_rows[lv].extend(describe_stats(panel, level=lv))
    artifacts = []
    lines = cfg.metadata_lines()
    for lv in ("city", "region"):
        if all_rows[lv]:
            path = _out_path(cfg, f"describe_{lv}.csv")
            _atomic(path, lambda tmp, rows=all_rows[lv]: write_descriptive_rows(
                rows, tmp, metadata=lines))
            artifacts.append(path)
    chart_rows = all_rows["city"] or all_rows["region"]
    if chart_rows:
        png = _out_path(cfg, "describe_cv.png")
        _atomic(png, lambda tmp: figures.save_describe_chart(chart_rows, tmp))
        artifacts.append(png)
    _write_run_metadata(cfg, "describe", artifacts)
    for row in all_rows["city"]:
        click.echo(
            f"{row.event_type} {row.period_kind}: mean={row.mean_mu:.4g} sd={row.stddev_sigma:.4g}"
        )


@cli.command()
@with_config
def correlate(**params):
    """Correlation matrix between static features and span-total counts."""
    cfg = _cfg_from_params(**params)
    if cfg.types == ["ALL"]:
        cfg.types = list(EVENT_TYPES)
    panel, _ = _build_panel(cfg)
    cm = build_correlation_matrix(panel)
    csv_path = _out_path(cfg, "correlation_matrix.csv")
    _atomic(csv_path, lambda tmp: cm.to_csv(tmp, metadata=cfg.metadata_lines()))
    png = _out_path(cfg, "correlation_heatmap.png")
    _atomic(png, lambda tmp: figures.save_correlation_heatmap(cm, tmp))
    _write_run_metadata(cfg, "correlate", [csv_path, png])
    click.echo(f"correlated {len(cm.feature_names)} features x {len(cm.event_types)} event types")


@cli.command()
@with_config
@click.option("--trees", "trees_flag", type=int, default=None, help="Number of trees.")
@click.option("--threshold", type=float, default=None, help="Selection score threshold.")
def importance(trees_flag, threshold, **params):
    """Rank features per event type with the permutation forest."""
    cfg = _cfg_from_params(**params)
    if trees_flag:
        cfg.trees = trees_flag
    if threshold is not None:
        cfg.importance_threshold = threshold
    panel, _ = _build_panel(cfg)
    artifacts = []
    for etype in _sorted_types(cfg):
        totals: dict[str, float] = {}
        feats: dict[str, np.ndarray] = {}
        for o in panel.observations:
            if o.event_type != etype:
                continue
            totals[o.region_id] = totals.get(o.region_id, 0.0) + o.count_y
            feats.setdefault(o.region_id, o.x)
        regions = sorted(totals)
        X = np.array([feats[r] for r in regions])
        y = np.array([totals[r] for r in regions])
        report = rank_features(
            X, y, list(panel.feature_names),
            ForestConfig(n_trees=cfg.trees, seed=cfg.seed),
            threshold=cfg.importance_threshold,
        )
        base = f"importance_{etype}"
        csv_path = _out_path(cfg, base + ".csv")
        _atomic(csv_path, lambda tmp, r=report: r.to_csv(tmp, metadata=cfg.metadata_lines()))
        json_path = _out_path(cfg, base + ".json")
        _write_json(cfg, json_path, json.loads(report.to_json()))
        png = _out_path(cfg, base + ".png")
        _atomic(png, lambda tmp, r=report: figures.save_importance_chart(r, tmp, title=etype))
        artifacts += [csv_path, json_path, png]
        click.echo(f"{etype}: selected {', '.join(report.selected)}")
    _write_run_metadata(cfg, "importance", artifacts)


@cli.command("voronoi")
@with_config
def voronoi_cmd(**params):
    """Station service areas, overlap fractions, and merged station features."""
    cfg = _cfg_from_params(**params)
    stations, part, overlap, proj, _ = _station_setup(cfg)
    geo_path = _out_path(cfg, "voronoi.geojson")
    _write_json(cfg, geo_path, partition_to_geojson(part, projection=proj))
    csv_path = _out_path(cfg, "overlap_matrix.csv")
    _atomic(csv_path, lambda tmp: overlap.to_csv(tmp, metadata=cfg.metadata_lines()))
    artifacts = [geo_path, csv_path]
    if cfg.features and os.path.exists(cfg.features):
        table = redistribute_features(parse_feature_table(cfg.features), overlap)
        feat_path = _out_path(cfg, "station_features.csv")
        _atomic(feat_path, lambda tmp: write_feature_table(table, tmp, metadata=cfg.metadata_lines()))
        artifacts.append(feat_path)
    _write_run_metadata(cfg, "voronoi", artifacts)
    click.echo(f"{len(part.cells)} station cells; area mismatch {part.area_mismatch():.2e}")


@cli.command()
@with_config
def fit(**params):
    """Fit one NB2 model per event type on the training split."""
    cfg = _cfg_from_params(**params)
    panel, _ = _build_panel(cfg)
    parts = split(panel, cfg.train_fraction, cfg.seed)
    artifacts = []
    for etype in _sorted_types(cfg):
        subset = _subset_for(cfg, panel, etype)
        model = fit_panel(parts.train, etype, feature_subset=subset, options=FitOptions())
        path = _out_path(cfg, f"model_{etype}.json")
        _atomic(path, lambda tmp, m=model: _write_text(tmp, model_to_json(m, metadata=cfg.metadata_dict())))
        artifacts.append(path)
        click.echo(
            f"{etype}: alpha={model.alpha:.4g} loglik={model.diagnostics.log_likelihood:.6g} "
            f"iters={model.diagnostics.iterations}"
        )
    _write_run_metadata(cfg, "fit", artifacts)


@cli.command("predict")
@with_config
@click.option("--models", "models_dir", type=click.Path(exists=True), default=None,
              help="Directory holding model_<TYPE>.json files (default: --out).")
@click.option("--exposure", type=float, default=1.0, help="Periods of exposure to predict.")
def predict_cmd(models_dir, exposure, **params):
    """Per-region expected counts from fitted models."""
    cfg = _cfg_from_params(**params)
    _require(cfg, "features")
    directory = models_dir or cfg.out
    table = parse_feature_table(cfg.features)
    if cfg.granularity == "station":
        _, _, overlap, _, _ = _station_setup(cfg)
        table = redistribute_features(table, overlap)
    rows = []
    per_region_props: dict[str, dict] = {}
    for etype in _sorted_types(cfg):
        path = os.path.join(directory, f"model_{etype}.json")
        if not os.path.exists(path):
            raise ValueError(f"no model file for {etype}: {path}")
        with open(path, encoding="utf-8") as fh:
            model = model_from_json(fh.read())
        mu = predict(model, table, exposure=exposure)
        for rid in table.region_ids:
            rows.append((rid, etype, mu[rid]))
            per_region_props.setdefault(rid, {})[f"predicted_{etype}"] = mu[rid]
    csv_path = _out_path(cfg, "predictions.csv")

    def _write_predictions(tmp):
        import csv as _csv

        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            for line in cfg.metadata_lines():
                fh.write(f"# {line}\n")
            writer = _csv.writer(fh)
            writer.writerow(["region_id", "event_type", "predicted_mean"])
            for rid, etype, value in rows:
                writer.writerow([rid, etype, repr(float(value))])

    _atomic(csv_path, _write_predictions)
    artifacts = [csv_path]
    if cfg.geometry and os.path.exists(cfg.geometry):
        regions = [(r.region_id, region_to_shapely(r)) for r in parse_regions_geojson(cfg.geometry)]
        regions = [(rid, g) for rid, g in regions if rid in per_region_props]
        geo = regions_to_geojson(regions, properties=per_region_props)
        geo_path = _out_path(cfg, "predictions.geojson")
        _write_json(cfg, geo_path, geo)
        artifacts.append(geo_path)
    _write_run_metadata(cfg, "predict", artifacts)
    click.echo(f"predicted {len(rows)} region x type means")


@cli.command()
@with_config
def evaluate(**params):
    """Train/test split, fit, and error metrics per event type."""
    cfg = _cfg_from_params(**params)
    panel, _ = _build_panel(cfg)
    parts = split(panel, cfg.train_fraction, cfg.seed)
    reports = []
    artifacts = []
    error_props: dict[str, dict] = {}
    for etype in _sorted_types(cfg):
        subset = _subset_for(cfg, panel, etype)
        model = fit_panel(parts.train, etype, feature_subset=subset, options=FitOptions())
        report = evaluate_model(model, parts.test, granularity=cfg.granularity)
        reports.append(report)
        ecdf = residual_ecdf(report.abs_errors())
        ecdf_path = _out_path(cfg, f"ecdf_{etype}.csv")
        _atomic(ecdf_path, lambda tmp, e=ecdf: e.to_csv(tmp, metadata=cfg.metadata_lines()))
        png = _out_path(cfg, f"ecdf_{etype}.png")
        _atomic(png, lambda tmp, e=ecdf: figures.save_ecdf_chart(e, tmp, title=etype))
        artifacts += [ecdf_path, png]
        for rid, entry in report.per_region.items():
            error_props.setdefault(rid, {})[f"abs_error_{etype}"] = entry.abs_error
        click.echo(f"{etype}: mae={report.mae_obs:.6g} rmse={report.rmse:.6g} n={report.n_obs}")
    if len(reports) == 1:
        # single-type runs also carry the bare property name
        for rid, entry in reports[0].per_region.items():
            error_props[rid]["abs_error"] = entry.abs_error
    metrics_path = _out_path(cfg, "metrics.csv")
    _atomic(metrics_path, lambda tmp: write_metric_reports(reports, tmp, metadata=cfg.metadata_lines()))
    artifacts.append(metrics_path)
    if cfg.geometry and os.path.exists(cfg.geometry) and cfg.granularity == "neighborhood":
        regions = [(r.region_id, region_to_shapely(r)) for r in parse_regions_geojson(cfg.geometry)]
        regions = [(rid, g) for rid, g in regions if rid in error_props]
        geo_path = _out_path(cfg, "errors.geojson")
        _write_json(cfg, geo_path, regions_to_geojson(regions, properties=error_props))
        artifacts.append(geo_path)
    _write_run_metadata(cfg, "evaluate", artifacts)


@cli.command()
@with_config
@click.option("--k", "k_flag", type=int, default=None, help="Number of risk classes.")
@click.option("--exposure", type=float, default=1.0, help="Periods of exposure to predict.")
def classify(k_flag, exposure, **params):
    """Risk tiers from predicted per-region event frequencies."""
    cfg = _cfg_from_params(**params)
    if k_flag:
        cfg.k_classes = k_flag
    panel, features = _build_panel(cfg)
    parts = split(panel, cfg.train_fraction, cfg.seed)
    etype = _sorted_types(cfg)[0]
    if len(_sorted_types(cfg)) > 1:
        click.echo("warning: classify uses the first requested event type only", err=True)
    subset = _subset_for(cfg, panel, etype)
    model = fit_panel(parts.train, etype, feature_subset=subset, options=FitOptions())
    table = features
    if cfg.regions_include:
        keep = [i for i, r in enumerate(table.region_ids) if r in set(cfg.regions_include)]
        from .ingest import FeatureTable

        table = FeatureTable([table.region_ids[i] for i in keep], list(table.feature_names),
                             table.values[keep])
    mu = predict(model, table, exposure=exposure)
    labels = ("Low", "Medium", "High", "Severe") if cfg.k_classes == 4 else tuple(
        f"C{i + 1}" for i in range(cfg.k_classes)
    )
    result = classify_regions(mu, k=cfg.k_classes, labels=labels)
    csv_path = _out_path(cfg, "classify.csv")
    _atomic(csv_path, lambda tmp: result.to_csv(tmp, metadata=cfg.metadata_lines()))
    png = _out_path(cfg, "classify_breaks.png")
    _atomic(png, lambda tmp: figures.save_breaks_chart(result, tmp, title=etype))
    artifacts = [csv_path, png]
    if cfg.geometry and os.path.exists(cfg.geometry):
        props = {
            rid: {"risk_class": result.label_of(rid), "predicted_mean": result.values[rid]}
            for rid in result.assignment
        }
        regions = [(r.region_id, region_to_shapely(r)) for r in parse_regions_geojson(cfg.geometry)]
        regions = [(rid, g) for rid, g in regions if rid in props]
        geo_path = _out_path(cfg, "classify.geojson")
        _write_json(cfg, geo_path, regions_to_geojson(regions, properties=props))
        artifacts.append(geo_path)
    _write_run_metadata(cfg, "classify", artifacts)
    counts = {label: 0 for label in labels}
    for rid in result.assignment:
        counts[result.label_of(rid)] += 1
    click.echo("; ".join(f"{label}: {counts[label]}" for label in labels))


@cli.command("compare-periods")
@with_config
@click.option("--cutoff", required=True, help="RFC 3339 timestamp splitting the span.")
def compare_periods_cmd(cutoff, **params):
    """Fit and score independently before and after a cutoff date."""
    cfg = _cfg_from_params(**params)
    panel, _ = _build_panel(cfg)
    when = parse_timestamp(cutoff, cfg.timezone)
    comparisons = {}
    rows = []
    for etype in _sorted_types(cfg):
        subset = _subset_for(cfg, panel, etype)
        comp = compare_periods_fn(
            panel, when, feature_subset=subset, event_type=etype,
            train_fraction=cfg.train_fraction, seed=cfg.seed,
        )
        comparisons[etype] = comp
        rows.append((etype, comp))
        click.echo(
            f"{etype}: mae {comp.before.mae_obs:.6g} -> {comp.after.mae_obs:.6g}; "
            f"rmse {comp.before.rmse:.6g} -> {comp.after.rmse:.6g}"
        )
    csv_path = _out_path(cfg, "compare_periods.csv")

    def _write(tmp):
        import csv as _csv

        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            for line in cfg.metadata_lines():
                fh.write(f"# {line}\n")
            writer = _csv.writer(fh)
            writer.writerow(
                ["event_type", "model", "mae_before", "mae_after", "rmse_before", "rmse_after"]
            )
            for etype, comp in rows:
                writer.writerow(
                    [etype, comp.before.period_kind,
                     repr(comp.before.mae_obs), repr(comp.after.mae_obs),
                     repr(comp.before.rmse), repr(comp.after.rmse)]
                )

    _atomic(csv_path, _write)
    png = _out_path(cfg, "compare_periods.png")
    _atomic(png, lambda tmp: figures.save_comparison_chart(comparisons, tmp))
    _write_run_metadata(cfg, "compare-periods", [csv_path, png])


@cli.command()
@with_config
@click.option("--url", default=None, help="HTTP(S) source to download.")
@click.option("--overpass-category", default=None,
              help="Fetch a PoI group from the configured Overpass endpoint instead of --url.")
@click.option("--bbox", default=None, help="south,west,north,east filter for Overpass queries.")
@click.option("--dest", default=None, help="Destination file (default: out/<basename>).")
def fetch(url, overpass_category, bbox, dest, **params):
    """Download a raw source file (requires --allow-network)."""
    cfg = _cfg_from_params(**params)
    from urllib.parse import quote

    from .ingest import build_overpass_query, fetch_url_to_file

    if (url is None) == (overpass_category is None):
        raise click.UsageError("pass exactly one of --url or --overpass-category")
    default_name = "fetched.dat"
    if overpass_category is not None:
        box = tuple(float(v) for v in bbox.split(",")) if bbox else None
        query = build_overpass_query(overpass_category, bbox=box)
        url = f"{cfg.overpass_url}?data={quote(query)}"
        default_name = f"overpass_{overpass_category.replace(' ', '_')}.json"
    target = dest or _out_path(cfg, os.path.basename(url.split("?")[0]) or default_name)
    n = fetch_url_to_file(url, target, allow_network=cfg.allow_network)
    click.echo(f"fetched {n} bytes -> {target}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(2)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except (errors.EventriskError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
