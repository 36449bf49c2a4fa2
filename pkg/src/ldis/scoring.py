"""The ten binary location-data integrity indicators and their rollup.

Indicator polarity: "pass" means no integrity issue was found, so the
site score (LDIS) is the count of passes out of the evaluable
indicators. Missing upstream inputs mark an indicator "na" (not
evaluable) rather than failing it; reports expose per-indicator
completeness so consumers can filter on fully-evaluated sites.

Threshold strictness mirrors the indicator definitions exactly:
infrastructure uses strict "more than 10%", the land-cover family uses
"20% or more", circle/admin/duplicate comparisons are ">= 95%",
"more than 98%" and "more than 95%" respectively.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

PASS = "pass"
FAIL = "fail"
NOT_EVALUABLE = "na"

INDICATOR_NAMES = (
    "road_presence",
    "built_area_presence",
    "forest_at_planting_glad",
    "other_landcover_score",
    "nesting_polygon",
    "intersecting_polygon",
    "exact_admin_area",
    "perfect_circle_indicator",
    "geometry_validity",
    "stable_cropland_score",
)

SIZE_BIN_EDGES = (10.0, 50.0, 100.0, 500.0, 1000.0, 2000.0, 5000.0)
SIZE_BIN_LABELS = ("<10", "10-50", "50-100", "100-500", "500-1000", "1000-2000", "2000-5000", ">5000")

SMALL_SITE_KM2 = 5.0  # histogram split between small and large sites


@dataclass(frozen=True)
class ScoringConfig:
    infra_threshold: float = 0.10
    landcover_threshold: float = 0.20
    forest_at_planting_threshold: float = 0.20
    stable_cropland_threshold: float = 0.20
    circle_threshold: float = 0.95
    admin_threshold: float = 0.98
    dup_threshold: float = 0.95
    road_buffer_m: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if f.name == "road_buffer_m":
                continue
            value = getattr(self, f.name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{f.name} must be in (0, 1), got {value}")


@dataclass(frozen=True)
class IndicatorVector:
    """Status of each of the ten indicators for one site."""

    road_presence: str = NOT_EVALUABLE
    built_area_presence: str = NOT_EVALUABLE
    forest_at_planting_glad: str = NOT_EVALUABLE
    other_landcover_score: str = NOT_EVALUABLE
    nesting_polygon: str = NOT_EVALUABLE
    intersecting_polygon: str = NOT_EVALUABLE
    exact_admin_area: str = NOT_EVALUABLE
    perfect_circle_indicator: str = NOT_EVALUABLE
    geometry_validity: str = NOT_EVALUABLE
    stable_cropland_score: str = NOT_EVALUABLE

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in INDICATOR_NAMES}


@dataclass(frozen=True)
class LdisScore:
    site_id: str
    passed: int
    evaluated: int
    perfect: bool


def _threshold(value, limit, strict: bool) -> str:
    if value is None:
        return NOT_EVALUABLE
    if strict:
        return FAIL if value > limit else PASS
    return FAIL if value >= limit else PASS


def evaluate_indicators(
    site_id: str,
    quality,
    relations,
    admin_match,
    augment,
    cfg: ScoringConfig = ScoringConfig(),
) -> IndicatorVector:
    """Evaluate the ten indicators from upstream module outputs.

    ``relations`` is the list of relation records in which the site
    appears on the A side (None when the relation stage did not run);
    only the "intersecting" relation fails the intersection indicator and
    only a subset role fails the nesting indicator. ``admin_match`` is
    the best AdminMatch or None when no admin layer was supplied.
    Point-origin sites are scored on their derived buffer polygon.
    """
    status = {}

    # infrastructure: built-up plus permanent water, strictly more than 10%
    if augment is None or augment.built_fraction is None or augment.water_fraction is None:
        status["built_area_presence"] = NOT_EVALUABLE
    else:
        status["built_area_presence"] = _threshold(
            augment.built_fraction + augment.water_fraction, cfg.infra_threshold, strict=True
        )

    if augment is None:
        status["road_presence"] = NOT_EVALUABLE
    elif cfg.road_buffer_m > 0.0:
        status["road_presence"] = _threshold(
            augment.road_area_fraction, cfg.infra_threshold, strict=True
        )
    elif augment.road_km_per_km2 is None:
        status["road_presence"] = NOT_EVALUABLE
    else:
        status["road_presence"] = FAIL if augment.road_km_per_km2 > 0.0 else PASS

    landcover = augment.other_landcover_fraction if augment else None
    status["other_landcover_score"] = _threshold(landcover, cfg.landcover_threshold, strict=False)
    forest = augment.treecover_at_planting_fraction if augment else None
    status["forest_at_planting_glad"] = _threshold(
        forest, cfg.forest_at_planting_threshold, strict=False
    )
    cropland = augment.stable_cropland_fraction if augment else None
    status["stable_cropland_score"] = _threshold(
        cropland, cfg.stable_cropland_threshold, strict=False
    )

    if relations is None:
        status["nesting_polygon"] = NOT_EVALUABLE
        status["intersecting_polygon"] = NOT_EVALUABLE
    else:
        is_subset = any(r.relation == "a_nested_in_b" for r in relations)
        status["nesting_polygon"] = FAIL if is_subset else PASS
        intersects = any(r.relation == "intersecting" for r in relations)
        status["intersecting_polygon"] = FAIL if intersects else PASS

    if admin_match is None:
        status["exact_admin_area"] = NOT_EVALUABLE
    else:
        status["exact_admin_area"] = FAIL if admin_match.mutual else PASS

    if quality is None:
        status["geometry_validity"] = NOT_EVALUABLE
        status["perfect_circle_indicator"] = NOT_EVALUABLE
    else:
        status["geometry_validity"] = PASS if quality.is_valid else FAIL
        if quality.circularity is None:
            status["perfect_circle_indicator"] = NOT_EVALUABLE
        else:
            status["perfect_circle_indicator"] = (
                FAIL if quality.circularity >= cfg.circle_threshold else PASS
            )

    return IndicatorVector(**status)


def ldis_score(site_id: str, vector: IndicatorVector) -> LdisScore:
    values = list(vector.as_dict().values())
    passed = values.count(PASS)
    evaluated = passed + values.count(FAIL)
    return LdisScore(site_id, passed, evaluated, passed == 10 and evaluated == 10)


@dataclass
class SiteScoreRow:
    """One scored site with the context the corpus report needs."""

    site_id: str
    vector: IndicatorVector
    score: LdisScore
    area_km2: float | None = None
    is_point_origin: bool = False
    is_nested: bool = False
    has_nested_children: bool = False
    planting_year: int | None = None


def _histogram(rows) -> dict:
    counts = {k: 0 for k in range(11)}
    for row in rows:
        counts[row.score.passed] += 1
    return counts


def size_bin_label(area_km2: float) -> str:
    for edge, label in zip(SIZE_BIN_EDGES, SIZE_BIN_LABELS):
        if area_km2 < edge:
            return label
    return SIZE_BIN_LABELS[-1]


def completeness_report(rows) -> dict:
    """Corpus-level rollup: completeness, histograms and size bins.

    Bins are left-closed (a 10 km2 site falls in "10-50"). Sites without
    a derived area (invalid geometry) are excluded from the size table
    but appear everywhere else.
    """
    rows = list(rows)
    if not rows:
        return {}
    n = len(rows)
    completeness = {}
    for name in INDICATOR_NAMES:
        evaluable = sum(1 for row in rows if getattr(row.vector, name) != NOT_EVALUABLE)
        completeness[name] = evaluable / n

    by_geometry = {
        "area_geometry": _histogram([r for r in rows if not r.is_point_origin]),
        "point_buffer": _histogram([r for r in rows if r.is_point_origin]),
    }
    small = [r for r in rows if r.area_km2 is not None and r.area_km2 < SMALL_SITE_KM2]
    large = [r for r in rows if r.area_km2 is not None and r.area_km2 >= SMALL_SITE_KM2]

    binned = {label: [] for label in SIZE_BIN_LABELS}
    for row in rows:
        if row.area_km2 is not None:
            binned[size_bin_label(row.area_km2)].append(row)
    total_area = sum(r.area_km2 for label in SIZE_BIN_LABELS for r in binned[label])
    total_count = sum(len(v) for v in binned.values())
    size_bins = []
    for label in SIZE_BIN_LABELS:
        members = binned[label]
        bin_area = sum(r.area_km2 for r in members)
        nested_area = sum(r.area_km2 for r in members if r.is_nested)
        size_bins.append(
            {
                "bin_km2": label,
                "count": len(members),
                "count_pct": 100.0 * len(members) / total_count if total_count else 0.0,
                "total_area_km2": bin_area,
                "total_pct": 100.0 * bin_area / total_area if total_area else 0.0,
                "nested_area_km2": nested_area,
                "nested_pct": 100.0 * nested_area / bin_area if bin_area else 0.0,
            }
        )

    perfect = sum(1 for r in rows if r.score.perfect)
    year_counts = {}
    for row in rows:
        if row.planting_year is not None:
            year_counts[row.planting_year] = year_counts.get(row.planting_year, 0) + 1

    return {
        "n_sites": n,
        "indicator_completeness": completeness,
        "score_histogram": _histogram(rows),
        "score_histogram_by_geometry": by_geometry,
        "score_histogram_by_size": {
            f"<{SMALL_SITE_KM2:g}km2": _histogram(small),
            f">={SMALL_SITE_KM2:g}km2": _histogram(large),
        },
        "size_bins": size_bins,
        "perfect_count": perfect,
        "perfect_fraction": perfect / n,
        "share_passed_lte_9": sum(1 for r in rows if r.score.passed <= 9) / n,
        "planting_year_counts": dict(sorted(year_counts.items())),
    }
