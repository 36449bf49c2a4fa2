"""Catalog ingestion: GeoJSON + CSV metadata to harmonized site records.

Hosts report the same information under different names and units, so
ingestion maps known aliases onto canonical fields, converts hectares to
km2, types the planting date (actual planting vs registration vs
intervention year vs crediting start) and splits multipart geometries
into one record per part. Raw properties are kept verbatim so nothing
reported is lost; derived values live in their own fields.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import date, datetime

from .errors import ConfigError, CoordinateError, DuplicateSiteIdError
from .geometry import (
    SiteGeometry,
    derive_geometry,
    geometry_from_geojson,
    spherical_area_km2,
)

logger = logging.getLogger(__name__)

SITE_ID_KEYS = ("site_id", "site_id_reported", "siteid", "id")
PROJECT_ID_KEYS = ("project_id", "project_id_reported", "projectid", "project")
HOST_KEYS = ("host_name", "host")
URL_KEYS = ("url", "link")
ISO3_KEYS = ("iso3", "country_code", "iso")

# planting-date precedence: an actual planting date beats an intervention
# year, which beats a crediting start, which beats a registration date
DATE_FIELD_PRECEDENCE = (
    ("planting", ("planting_date", "planting_date_reported", "date_planted")),
    ("intervention_year", ("intervention_year",)),
    ("crediting_start", ("crediting_start", "crediting_period_start")),
    ("registration", ("registration_date", "registered",)),
)
DATE_TYPES = ("planting", "registration", "intervention_year", "crediting_start", "unknown")

DEFAULT_ALLOW_CLASSES = ("arr", "afforestation", "reforestation")
DEFAULT_KEYWORDS = ("afforestation", "reforestation", "tree planting", "revegetation")
CLASSIFICATION_KEYS = ("classification", "project_type", "category", "type")
TEXT_KEYS = ("name", "project_name", "site_name", "description")

HECTARES_PER_KM2 = 100.0


@dataclass
class SiteRecord:
    """One planting site after harmonization and geometry derivation."""

    site_id: str
    geometry: SiteGeometry
    project_id: str | None = None
    host_name: str | None = None
    url: str | None = None
    iso3: str = "unknown"
    planting_date: date | None = None
    planting_date_type: str = "unknown"
    area_km2: float | None = None
    parent_site_id: str | None = None
    reported: dict = field(default_factory=dict)

    @property
    def planting_year(self) -> int | None:
        return self.planting_date.year if self.planting_date else None


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    rule: str
    reason: str


def parse_date_guess(value) -> date | None:
    """Best-effort date parse: ISO dates, common orderings, bare years."""
    if value is None:
        return None
    if isinstance(value, (int, float)) and float(value).is_integer():
        year = int(value)
        if 1900 <= year <= 2100:
            return date(year, 1, 1)
        return None
    text = str(value).strip()
    if not text:
        return None
    if re.fullmatch(r"\d{4}", text):
        return date(int(text), 1, 1)
    for fmt in ("%Y-%m-%d", "%Y/%m/%d", "%d.%m.%Y", "%d/%m/%Y", "%Y-%m"):
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    try:
        return datetime.fromisoformat(text).date()
    except ValueError:
        return None


def _first_present(props: dict, keys) -> tuple:
    lowered = {str(k).lower(): v for k, v in props.items()}
    for key in keys:
        if key in lowered and lowered[key] not in (None, ""):
            return key, lowered[key]
    return None, None


_AREA_VALUE = re.compile(r"^\s*([0-9][0-9_,.]*)\s*(ha|hectares?|km2|km²|sqkm)?\s*$", re.I)


def normalize_area_km2(props: dict) -> float | None:
    """Reported area in km2 from whichever field/unit the host used."""
    lowered = {str(k).lower(): v for k, v in props.items()}
    for key in ("area_km2", "area_sqkm", "site_sqkm"):
        if key in lowered and lowered[key] not in (None, ""):
            try:
                return float(lowered[key])
            except (TypeError, ValueError):
                return None
    for key in ("area_ha", "hectares", "area_hectares"):
        if key in lowered and lowered[key] not in (None, ""):
            try:
                return float(lowered[key]) / HECTARES_PER_KM2
            except (TypeError, ValueError):
                return None
    raw = lowered.get("area") or lowered.get("area_reported")
    if raw in (None, ""):
        return None
    unit = str(lowered.get("area_unit", "")).lower()
    match = _AREA_VALUE.match(str(raw))
    if not match:
        return None
    number = float(match.group(1).replace(",", "").replace("_", ""))
    suffix = (match.group(2) or unit or "km2").lower()
    if suffix.startswith("ha") or suffix.startswith("hect"):
        return number / HECTARES_PER_KM2
    return number


def resolve_planting_date(props: dict) -> tuple:
    """(date, date_type) per the precedence order; (None, 'unknown') otherwise."""
    lowered = {str(k).lower(): v for k, v in props.items()}
    declared = str(lowered.get("planting_date_type", "")).strip().lower() or None
    for date_type, keys in DATE_FIELD_PRECEDENCE:
        key, value = _first_present(props, keys)
        if key is None:
            continue
        parsed = parse_date_guess(value)
        if parsed is None:
            logger.warning("unparseable date %r in field %s", value, key)
            return None, "unknown"
        if date_type == "planting" and declared in DATE_TYPES:
            return parsed, declared
        return parsed, date_type
    return None, "unknown"


def _read_metadata_csv(path) -> dict:
    joined = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key, site_id = _first_present(row, SITE_ID_KEYS)
            if key is None:
                raise ConfigError(f"{path}: metadata rows need a site id column")
            joined[str(site_id)] = {k: v for k, v in row.items() if v not in (None, "")}
    return joined


def ingest_catalog(
    geojson_path,
    metadata_csv=None,
    point_buffer_m: float = 100.0,
) -> list:
    """Parse a site catalog into sorted, harmonized SiteRecords.

    Multipart geometries become one record per part with '#k'-suffixed
    ids (parent id retained). Duplicate site ids are a hard error;
    unparseable dates are kept with date type 'unknown'.
    """
    with open(geojson_path) as f:
        doc = json.load(f)
    if doc.get("type") == "FeatureCollection":
        features = doc.get("features", [])
    elif doc.get("type") == "Feature":
        features = [doc]
    else:
        raise ConfigError(f"{geojson_path}: expected a Feature or FeatureCollection")

    metadata = _read_metadata_csv(metadata_csv) if metadata_csv else {}

    records = []
    seen = {}
    for i, feature in enumerate(features):
        props = dict(feature.get("properties") or {})
        _, site_id = _first_present(props, SITE_ID_KEYS)
        if site_id is None:
            site_id = f"feature-{i}"
        site_id = str(site_id)
        seen.setdefault(site_id, 0)
        seen[site_id] += 1
        if site_id in metadata:
            merged = dict(metadata[site_id])
            merged.update(props)
            props = merged

        geometry = geometry_from_geojson(feature.get("geometry") or {})
        try:
            parts = derive_geometry(geometry, point_buffer_m=point_buffer_m)
        except CoordinateError:
            raise
        planting, date_type = resolve_planting_date(props)
        _, project_id = _first_present(props, PROJECT_ID_KEYS)
        _, host = _first_present(props, HOST_KEYS)
        _, url = _first_present(props, URL_KEYS)
        _, iso3 = _first_present(props, ISO3_KEYS)
        area_reported = normalize_area_km2(props)
        if area_reported is not None:
            props.setdefault("area_km2", area_reported)

        multi = len(parts) > 1
        for k, part in enumerate(parts, start=1):
            child_id = f"{site_id}#{k}" if multi else site_id
            records.append(
                SiteRecord(
                    site_id=child_id,
                    geometry=part,
                    project_id=str(project_id) if project_id is not None else None,
                    host_name=str(host) if host is not None else None,
                    url=str(url) if url is not None else None,
                    iso3=str(iso3) if iso3 is not None else "unknown",
                    planting_date=planting,
                    planting_date_type=date_type,
                    area_km2=spherical_area_km2(part.derived_rings),
                    parent_site_id=site_id if multi else None,
                    reported=props,
                )
            )

    collisions = sorted(sid for sid, count in seen.items() if count > 1)
    if collisions:
        raise DuplicateSiteIdError(collisions)
    records.sort(key=lambda r: r.site_id)
    return records


def filter_afforestation(
    record: SiteRecord,
    allow_classes=DEFAULT_ALLOW_CLASSES,
    keywords=DEFAULT_KEYWORDS,
) -> FilterDecision:
    """Keep afforestation/reforestation sites, drop everything else.

    An allow-listed classification wins outright; otherwise any keyword
    hit in the name/description keeps the record. The matched rule is
    recorded so drops are explainable.
    """
    lowered = {str(k).lower(): str(v).lower() for k, v in record.reported.items() if v}
    for key in CLASSIFICATION_KEYS:
        value = lowered.get(key)
        if value and any(cls.lower() in value for cls in allow_classes):
            return FilterDecision(True, "classification", f"{key}={record.reported.get(key)!s}")
    for key in TEXT_KEYS:
        value = lowered.get(key)
        if not value:
            continue
        for kw in keywords:
            if kw.lower() in value:
                return FilterDecision(True, f"keyword:{kw}", f"matched in {key}")
    return FilterDecision(False, "no-match", "no allow-listed classification or keyword")
