"""Run orchestration: config, stages, worker pools and artifact emission.

A run executes ingest -> geometry -> relations -> augment -> vegetation
(when band stacks are configured) -> scoring -> reports. Stages are
sequential; work inside a stage may fan out over a process pool, and
every stage ends with a deterministic sort so outputs are byte-identical
for any worker count. Cross-stage data stays in memory; artifacts are
CSV files plus a JSON summary and a verbatim copy of the run config.

Exit status contract: 0 when every indicator of every site was
evaluable, 2 when some were not (a partial result), 1 on fatal errors
(raised as exceptions; the CLI maps them).
"""

from __future__ import annotations

import csv
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely

from .catalog import SiteRecord, filter_afforestation, ingest_catalog
from .errors import ConfigError
from .geometry import assess_geometry, outer_buffer_annulus, rings_bbox
from .overlay import (
    AugmentationRecord,
    CLIMATE_OFFSETS,
    horn_slope_layer,
    road_area_fraction,
    road_density,
    sample_climate_at_centroid,
    terrain_stats,
    tree_loss_windows,
    zonal_class_fraction,
)
from .rasters import GridLayer, read_layer
from .relations import (
    AdminLayer,
    admin_area_match,
    build_site_index,
    classify_pair,
    pairwise_overlap_ratio,
)
from .scoring import (
    INDICATOR_NAMES,
    NOT_EVALUABLE,
    LdisScore,
    ScoringConfig,
    SiteScoreRow,
    completeness_report,
    evaluate_indicators,
    ldis_score,
)
from .vegetation import (
    BandStack,
    PERIODS,
    monthly_zone_ndvi_means,
    top_green_months,
    zone_index_series,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2

LANDCOVER_CLASS_FIELDS = (
    "water",
    "other_landcover",
    "stable_cropland",
    "cropland_from_tree",
    "cropland_to_tree",
    "short_veg_after_loss",
)


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    config_path: Path
    output_dir: Path
    sites_path: Path
    metadata_csv: Path | None
    filter_enabled: bool
    allow_classes: tuple
    keywords: tuple
    point_buffer_m: float
    annulus_m: float
    scoring: ScoringConfig
    layers: dict
    vegetation: dict
    seed: int
    workers: int


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_run_config(path, out=None, workers=None, seed=None) -> RunConfig:
    """Load and validate a JSON run config; CLI overrides win.

    Every referenced input path must exist at load time so a run fails
    before any work starts, not in the middle.
    """
    path = Path(path)
    with open(path) as f:
        raw = json.load(f)
    base = path.parent

    catalog = raw.get("catalog") or {}
    if "sites" not in catalog:
        raise ConfigError("config needs catalog.sites (GeoJSON path)")
    sites_path = _resolve(base, catalog["sites"])
    metadata_csv = _resolve(base, catalog["metadata_csv"]) if catalog.get("metadata_csv") else None

    missing = [str(p) for p in (sites_path, metadata_csv) if p is not None and not p.exists()]

    layers = raw.get("layers") or {}
    for name, spec in layers.items():
        for key in ("path",):
            if isinstance(spec, dict) and key in spec:
                p = _resolve(base, spec[key])
                if not p.exists():
                    missing.append(str(p))
        if isinstance(spec, dict) and "years" in spec and isinstance(spec["years"], dict):
            for p in spec["years"].values():
                if not _resolve(base, p).exists():
                    missing.append(str(_resolve(base, p)))
    for entry in (raw.get("vegetation") or {}).get("manifest", []):
        for p in entry.get("bands", {}).values():
            if not _resolve(base, p).exists():
                missing.append(str(_resolve(base, p)))
    if missing:
        raise ConfigError(f"config references missing paths: {', '.join(sorted(set(missing)))}")

    filter_cfg = raw.get("filter") or {}
    scoring_cfg = ScoringConfig(**(raw.get("scoring") or {}))
    out_dir = Path(out) if out else _resolve(base, raw.get("output_dir", "out"))

    return RunConfig(
        raw=raw,
        base_dir=base,
        config_path=path,
        output_dir=out_dir,
        sites_path=sites_path,
        metadata_csv=metadata_csv,
        filter_enabled=bool(filter_cfg.get("enabled", False)),
        allow_classes=tuple(filter_cfg.get("allow_classes", ("arr", "afforestation", "reforestation"))),
        keywords=tuple(
            filter_cfg.get("keywords", ("afforestation", "reforestation", "tree planting", "revegetation"))
        ),
        point_buffer_m=float(raw.get("point_buffer_m", 100.0)),
        annulus_m=float(raw.get("annulus_m", 500.0)),
        scoring=scoring_cfg,
        layers=layers,
        vegetation=raw.get("vegetation") or {},
        seed=int(seed if seed is not None else raw.get("seed", 0)),
        workers=int(workers if workers is not None else raw.get("workers", 1)),
    )


@dataclass
class LayerSet:
    """Overlay layers loaded once and shared read-only by all sites."""

    built: tuple | None = None  # (GridLayer, class codes)
    landcover: tuple | None = None  # (GridLayer, {field: class codes})
    treecover: tuple | None = None  # ({year: GridLayer}, class codes)
    lossyear: GridLayer | None = None
    dem: GridLayer | None = None
    slope: GridLayer | None = None
    roads: list | None = None
    admin: AdminLayer | None = None
    climate: dict = field(default_factory=dict)  # var -> {year: [12 layers]}
    climate_patterns: dict = field(default_factory=dict)

    def any_overlay(self) -> bool:
        return any(
            x is not None for x in (self.built, self.landcover, self.treecover, self.lossyear, self.dem, self.roads)
        )


def _read_lines_geojson(path) -> list:
    with open(path) as f:
        doc = json.load(f)
    lines = []
    for feature in doc.get("features", []):
        geom = feature.get("geometry") or {}
        if geom.get("type") == "LineString":
            lines.append(np.asarray(geom["coordinates"], dtype=np.float64))
        elif geom.get("type") == "MultiLineString":
            lines.extend(np.asarray(part, dtype=np.float64) for part in geom["coordinates"])
    return lines


def _read_admin_geojson(path) -> AdminLayer:
    with open(path) as f:
        doc = json.load(f)
    items = []
    for i, feature in enumerate(doc.get("features", [])):
        props = feature.get("properties") or {}
        admin_id = str(props.get("admin_id", f"admin-{i}"))
        geom = feature.get("geometry") or {}
        if geom.get("type") == "Polygon":
            items.append((admin_id, tuple(np.asarray(r, dtype=np.float64) for r in geom["coordinates"])))
        elif geom.get("type") == "MultiPolygon":
            # each part checked separately; resemblance is per contiguous area
            for k, part in enumerate(geom["coordinates"], start=1):
                items.append(
                    (f"{admin_id}#{k}", tuple(np.asarray(r, dtype=np.float64) for r in part))
                )
    return AdminLayer(items)


def load_layers(cfg: RunConfig) -> LayerSet:
    out = LayerSet()
    layers = cfg.layers
    if "built" in layers:
        spec = layers["built"]
        out.built = (
            read_layer(_resolve(cfg.base_dir, spec["path"]), "class-coded"),
            frozenset(spec.get("classes", (1,))),
        )
    if "landcover" in layers:
        spec = layers["landcover"]
        classes = {k: frozenset(v) for k, v in (spec.get("classes") or {}).items()}
        unknown = set(classes) - set(LANDCOVER_CLASS_FIELDS)
        if unknown:
            raise ConfigError(f"unknown landcover class fields: {sorted(unknown)}")
        out.landcover = (read_layer(_resolve(cfg.base_dir, spec["path"]), "class-coded"), classes)
    if "treecover" in layers:
        spec = layers["treecover"]
        years = {
            int(year): read_layer(_resolve(cfg.base_dir, p), "class-coded")
            for year, p in (spec.get("years") or {}).items()
        }
        if not years and "path" in spec:
            years = {0: read_layer(_resolve(cfg.base_dir, spec["path"]), "class-coded")}
        out.treecover = (years, frozenset(spec.get("classes", (1,))))
    if "lossyear" in layers:
        out.lossyear = read_layer(_resolve(cfg.base_dir, layers["lossyear"]["path"]), "loss-year")
    if "dem" in layers:
        out.dem = read_layer(_resolve(cfg.base_dir, layers["dem"]["path"]), "continuous")
        out.slope = horn_slope_layer(out.dem)
    if "roads" in layers:
        out.roads = _read_lines_geojson(_resolve(cfg.base_dir, layers["roads"]["path"]))
    if "admin" in layers:
        out.admin = _read_admin_geojson(_resolve(cfg.base_dir, layers["admin"]["path"]))
    for var in ("precip", "tmin", "tmax"):
        spec = (layers.get("climate") or {}).get(var)
        if spec:
            out.climate_patterns[var] = (spec["pattern"], tuple(int(y) for y in spec.get("years", ())))
            out.climate[var] = {}
    return out


def _climate_year(layer_set: LayerSet, cfg: RunConfig, var: str, year: int):
    """Lazy-load the 12 monthly layers of one climate year (cached)."""
    pattern, years = layer_set.climate_patterns[var]
    if year in layer_set.climate[var]:
        return layer_set.climate[var][year]
    if years and year not in years:
        layer_set.climate[var][year] = None
        return None
    try:
        months = [
            read_layer(_resolve(cfg.base_dir, pattern.format(year=year, month=m)), "monthly-band")
            for m in range(1, 13)
        ]
    except (OSError, ConfigError):
        months = None
    layer_set.climate[var][year] = months
    return months


# --- stage: relations -------------------------------------------------------

_PAIR_TASK = None  # set in the parent right before the pool forks


def _classify_pair_chunk(chunk) -> list:
    ids, all_rings, t_dup = _PAIR_TASK
    records = []
    for i, j in chunk:
        if ids[j] < ids[i]:
            i, j = j, i
        ratio_a, ratio_b = pairwise_overlap_ratio(all_rings[i], all_rings[j], ids=(ids[i], ids[j]))
        rec = classify_pair(ids[i], ids[j], ratio_a, ratio_b, t_dup)
        if rec.relation != "disjoint":
            records.append(rec)
            records.append(rec.mirrored())
    return records


def stage_relations(records, cfg: RunConfig) -> list:
    """Classify all overlapping site pairs; parallel over pair chunks."""
    global _PAIR_TASK
    items = [(r.site_id, r.geometry.derived_rings) for r in records]
    index = build_site_index(items)
    usable = np.array(
        [
            bool(shapely.is_valid(g)) and g.area > 0.0 if g is not None else False
            for g in index.geoms
        ]
    )
    for sid, ok in zip(index.ids, usable):
        if not ok:
            logger.warning("site %s skipped in relation scan (invalid or zero-area)", sid)
    pairs = index.candidate_pairs()
    pairs = pairs[usable[pairs[:, 0]] & usable[pairs[:, 1]]]

    all_rings = [r.geometry.derived_rings for r in records]
    _PAIR_TASK = (index.ids, all_rings, cfg.scoring.dup_threshold)
    try:
        if cfg.workers > 1 and len(pairs) > 256:
            chunks = np.array_split(pairs, cfg.workers * 4)
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_classify_pair_chunk, [c.tolist() for c in chunks]))
            relation_records = [rec for part in results for rec in part]
        else:
            relation_records = _classify_pair_chunk(pairs.tolist())
    finally:
        _PAIR_TASK = None
    relation_records.sort(key=lambda r: (r.site_a, r.site_b))
    return relation_records


# --- stage: augmentation ----------------------------------------------------

def augment_site(record: SiteRecord, layers: LayerSet, cfg: RunConfig) -> AugmentationRecord:
    rings = record.geometry.derived_rings
    aug = AugmentationRecord(site_id=record.site_id)

    if layers.built:
        layer, classes = layers.built
        aug.built_fraction = zonal_class_fraction(layer, rings, classes)
    if layers.landcover:
        layer, class_map = layers.landcover
        for name in LANDCOVER_CLASS_FIELDS:
            if name in class_map:
                value = zonal_class_fraction(layer, rings, class_map[name])
                setattr(aug, f"{name}_fraction", value)
    if layers.treecover and record.planting_year is not None:
        years, classes = layers.treecover
        if years:
            nearest = min(years, key=lambda y: (abs(y - record.planting_year), y))
            aug.treecover_at_planting_fraction = zonal_class_fraction(
                years[nearest], rings, classes
            )
    if layers.lossyear and record.planting_year is not None:
        windows = tree_loss_windows(layers.lossyear, rings, record.planting_year)
        if windows is not None:
            aug.loss_pre5 = windows.pre5
            aug.loss_pre1 = windows.pre1
            aug.loss_post5 = windows.post5
            aug.loss_windows_clipped = windows.clipped
    if layers.dem:
        ts = terrain_stats(layers.dem, rings, slope=layers.slope)
        if ts is not None:
            aug.mean_elevation_m = ts.mean_elevation_m
            aug.mean_slope_deg = ts.mean_slope_deg
    if layers.roads is not None:
        aug.road_km_per_km2 = road_density(layers.roads, rings)
        if cfg.scoring.road_buffer_m > 0.0:
            aug.road_area_fraction = road_area_fraction(
                layers.roads, rings, cfg.scoring.road_buffer_m
            )
    if layers.climate_patterns and record.planting_year is not None and record.geometry.centroid:
        lon, lat = record.geometry.centroid
        for var in sorted(layers.climate_patterns):
            samples = {}
            for offset in CLIMATE_OFFSETS:
                year = record.planting_year + offset
                monthly = _climate_year(layers, cfg, var, year)
                if monthly is None:
                    samples[offset] = None
                else:
                    samples[offset] = sample_climate_at_centroid(
                        {year: monthly}, lon, lat, [year]
                    )[year]
            aug.climate[var] = samples
    return aug


def stage_augment(records, layers: LayerSet, cfg: RunConfig) -> dict:
    return {r.site_id: augment_site(r, layers, cfg) for r in records}


# --- stage: vegetation ------------------------------------------------------

def _load_stack(cfg: RunConfig, entry: dict) -> BandStack:
    bands = {
        name: read_layer(_resolve(cfg.base_dir, path), "monthly-band")
        for name, path in entry["bands"].items()
    }
    return BandStack(bands, int(entry["year"]), int(entry["month"]))


def _entries_for_site(manifest, record: SiteRecord) -> list:
    mine = [e for e in manifest if e.get("site_id") == record.site_id]
    if mine:
        return mine
    return [e for e in manifest if "site_id" not in e]


def stage_vegetation(records, cfg: RunConfig) -> list:
    """Greenest-month zone series for every dated site with imagery."""
    veg = cfg.vegetation
    manifest = veg.get("manifest", [])
    if not manifest:
        return []
    reference_year = int(veg.get("reference_year", 2023))
    override_months = veg.get("months")
    indices = tuple(veg.get("indices", ("ndvi", "ndre", "savi")))
    max_cloud = float(veg.get("max_cloud_fraction", 0.20))

    cache = {}

    def stack_of(entry):
        key = id(entry)
        if key not in cache:
            cache[key] = _load_stack(cfg, entry)
        return cache[key]

    series = []
    for record in records:
        if record.planting_year is None:
            logger.warning("site %s has no usable planting date; vegetation skipped", record.site_id)
            continue
        entries = _entries_for_site(manifest, record)
        if not entries:
            continue
        rings = record.geometry.derived_rings
        annulus = outer_buffer_annulus(rings, cfg.annulus_m)
        if override_months:
            months = [int(m) for m in override_months]
        else:
            ref_stacks = [stack_of(e) for e in entries if int(e["year"]) == reference_year]
            months = top_green_months(monthly_zone_ndvi_means(ref_stacks, rings)) if ref_stacks else None
        if not months:
            logger.warning(
                "site %s: no greenest-month selection possible (reference year %d)",
                record.site_id,
                reference_year,
            )
            continue
        stacks_by_period = {}
        for period in PERIODS:
            year = record.planting_year + period
            stacks_by_period[period] = [
                stack_of(e) for e in entries if int(e["year"]) == year
            ]
        series.extend(
            zone_index_series(
                stacks_by_period,
                record.site_id,
                rings,
                annulus,
                months,
                indices=indices,
                max_cloud_fraction=max_cloud,
            )
        )
    series.sort(key=lambda r: (r.site_id, r.zone, r.period, r.index))
    return series


# --- stage: scoring ---------------------------------------------------------

def stage_scoring(records, qualities, relation_records, layers, augments, cfg: RunConfig):
    """Evaluate the indicator vector and score for every site."""
    by_site_a = {}
    if relation_records is not None:
        for rec in relation_records:
            by_site_a.setdefault(rec.site_a, []).append(rec)

    rows = []
    for record in records:
        quality = qualities.get(record.site_id)
        relations = by_site_a.get(record.site_id, []) if relation_records is not None else None
        admin = None
        if layers is not None and layers.admin is not None and len(layers.admin):
            admin = admin_area_match(
                record.site_id,
                record.geometry.derived_rings,
                layers.admin,
                cfg.scoring.admin_threshold,
            )
        augment = augments.get(record.site_id) if augments is not None else None
        vector = evaluate_indicators(record.site_id, quality, relations, admin, augment, cfg.scoring)
        score = ldis_score(record.site_id, vector)
        is_nested = any(r.relation == "a_nested_in_b" for r in relations or ())
        has_children = any(r.relation == "b_nested_in_a" for r in relations or ())
        rows.append(
            SiteScoreRow(
                site_id=record.site_id,
                vector=vector,
                score=score,
                area_km2=quality.area_km2 if quality else None,
                is_point_origin=record.geometry.is_point_origin,
                is_nested=is_nested,
                has_nested_children=has_children,
                planting_year=record.planting_year,
            )
        )
    return rows


# --- artifact emission ------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_sites_csv(path, records) -> None:
    reported_keys = sorted({k for r in records for k in r.reported})
    header = [
        "site_id",
        "parent_site_id",
        "project_id",
        "host_name",
        "url",
        "iso3",
        "planting_date",
        "planting_date_type",
        "geometry_kind",
        "area_km2_derived",
        "centroid_lon_derived",
        "centroid_lat_derived",
    ] + [f"{k}_reported" for k in reported_keys]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in records:
            lon, lat = r.geometry.centroid if r.geometry.centroid else (None, None)
            w.writerow(
                [
                    r.site_id,
                    _fmt(r.parent_site_id),
                    _fmt(r.project_id),
                    _fmt(r.host_name),
                    _fmt(r.url),
                    r.iso3,
                    r.planting_date.isoformat() if r.planting_date else "",
                    r.planting_date_type,
                    r.geometry.kind,
                    _fmt(r.area_km2),
                    _fmt(lon),
                    _fmt(lat),
                ]
                + [_fmt(r.reported.get(k)) for k in reported_keys]
            )


def write_relations_csv(path, relation_records) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["site_a", "site_b", "ratio_a", "ratio_b", "relation"])
        for r in relation_records:
            w.writerow([r.site_a, r.site_b, repr(r.ratio_a), repr(r.ratio_b), r.relation])


def write_augment_csv(path, records, augments) -> None:
    scalar_fields = [
        "built_fraction",
        "water_fraction",
        "other_landcover_fraction",
        "stable_cropland_fraction",
        "treecover_at_planting_fraction",
        "cropland_from_tree_fraction",
        "cropland_to_tree_fraction",
        "short_veg_after_loss_fraction",
        "road_km_per_km2",
        "road_area_fraction",
        "loss_pre5",
        "loss_pre1",
        "loss_post5",
        "loss_windows_clipped",
        "mean_elevation_m",
        "mean_slope_deg",
    ]
    climate_cols = [
        f"{var}_y{offset}" for var in ("precip", "tmin", "tmax") for offset in CLIMATE_OFFSETS
    ]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["site_id"] + scalar_fields + climate_cols)
        for r in records:
            aug = augments.get(r.site_id)
            if aug is None:
                aug = AugmentationRecord(site_id=r.site_id)
            row = [r.site_id] + [_fmt(getattr(aug, name)) for name in scalar_fields]
            for var in ("precip", "tmin", "tmax"):
                samples = aug.climate.get(var, {})
                row.extend(_fmt(samples.get(offset)) for offset in CLIMATE_OFFSETS)
            w.writerow(row)


def write_veg_series_csv(path, series) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["site_id", "zone", "period", "index", "mean", "pixel_count", "evaluable"])
        for r in series:
            w.writerow(
                [r.site_id, r.zone, r.period, r.index, _fmt(r.mean_value), r.pixel_count, _fmt(r.evaluable)]
            )


def write_scores_csv(path, rows, qualities) -> None:
    header = (
        ["site_id"]
        + list(INDICATOR_NAMES)
        + [
            "passed",
            "evaluated",
            "perfect",
            "is_point_origin",
            "contains_nested_sites",
            "circularity",
            "area_km2",
        ]
    )
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            quality = qualities.get(row.site_id)
            w.writerow(
                [row.site_id]
                + [getattr(row.vector, name) for name in INDICATOR_NAMES]
                + [
                    row.score.passed,
                    row.score.evaluated,
                    _fmt(row.score.perfect),
                    _fmt(row.is_point_origin),
                    _fmt(row.has_nested_children),
                    _fmt(quality.circularity if quality else None),
                    _fmt(row.area_km2),
                ]
            )


def write_dropped_csv(path, dropped) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["site_id", "rule", "reason"])
        for site_id, decision in dropped:
            w.writerow([site_id, decision.rule, decision.reason])


# --- orchestration ----------------------------------------------------------

@dataclass
class PipelineResult:
    exit_code: int
    artifacts: dict
    summary: dict
    n_sites: int
    n_dropped: int


STAGES = ("ingest", "relate", "augment", "veg", "score", "report")


def run_pipeline(cfg: RunConfig, upto: str = "report") -> PipelineResult:
    """Execute the pipeline through ``upto`` and emit that stage's artifacts."""
    if upto not in STAGES:
        raise ConfigError(f"unknown stage {upto!r}")
    rank = STAGES.index(upto)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {}

    records = ingest_catalog(cfg.sites_path, cfg.metadata_csv, cfg.point_buffer_m)
    dropped = []
    if cfg.filter_enabled:
        kept = []
        for record in records:
            decision = filter_afforestation(record, cfg.allow_classes, cfg.keywords)
            if decision.keep:
                kept.append(record)
            else:
                dropped.append((record.site_id, decision))
        records = kept
    sites_csv = cfg.output_dir / "sites.csv"
    write_sites_csv(sites_csv, records)
    artifacts["sites"] = sites_csv
    if cfg.filter_enabled:
        dropped_csv = cfg.output_dir / "dropped.csv"
        write_dropped_csv(dropped_csv, dropped)
        artifacts["dropped"] = dropped_csv

    config_copy = cfg.output_dir / "run_config.json"
    if config_copy.resolve() != cfg.config_path.resolve():
        shutil.copyfile(cfg.config_path, config_copy)
    artifacts["config"] = config_copy

    if rank < STAGES.index("relate"):
        return PipelineResult(EXIT_OK, artifacts, {}, len(records), len(dropped))

    qualities = {
        r.site_id: assess_geometry(r.geometry, site_id=r.site_id) for r in records
    }

    relation_records = stage_relations(records, cfg)
    relations_csv = cfg.output_dir / "relations.csv"
    write_relations_csv(relations_csv, relation_records)
    artifacts["relations"] = relations_csv
    if rank < STAGES.index("augment"):
        return PipelineResult(EXIT_OK, artifacts, {}, len(records), len(dropped))

    layers = load_layers(cfg)
    augments = None
    if layers.any_overlay() or layers.climate_patterns:
        augments = stage_augment(records, layers, cfg)
    elif upto == "augment":
        raise ConfigError("augment stage requires at least one overlay layer in config")
    augment_csv = cfg.output_dir / "augment.csv"
    write_augment_csv(augment_csv, records, augments or {})
    artifacts["augment"] = augment_csv
    if rank < STAGES.index("veg"):
        return PipelineResult(EXIT_OK, artifacts, {}, len(records), len(dropped))

    series = stage_vegetation(records, cfg)
    if series or cfg.vegetation.get("manifest"):
        veg_csv = cfg.output_dir / "veg_series.csv"
        write_veg_series_csv(veg_csv, series)
        artifacts["veg_series"] = veg_csv
    elif upto == "veg":
        raise ConfigError("veg stage requires vegetation.manifest entries in config")
    if rank < STAGES.index("score"):
        return PipelineResult(EXIT_OK, artifacts, {}, len(records), len(dropped))

    rows = stage_scoring(records, qualities, relation_records, layers, augments, cfg)
    scores_csv = cfg.output_dir / "ldis_scores.csv"
    write_scores_csv(scores_csv, rows, qualities)
    artifacts["scores"] = scores_csv

    summary = {}
    if rank >= STAGES.index("report"):
        summary = completeness_report(rows)
        summary["n_dropped_by_filter"] = len(dropped)
        summary_path = cfg.output_dir / "summary.json"
        with open(summary_path, "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        artifacts["summary"] = summary_path

    partial = any(
        getattr(row.vector, name) == NOT_EVALUABLE for row in rows for name in INDICATOR_NAMES
    )
    exit_code = EXIT_PARTIAL if partial else EXIT_OK
    return PipelineResult(exit_code, artifacts, summary, len(records), len(dropped))
