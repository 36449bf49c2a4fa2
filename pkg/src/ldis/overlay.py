"""Per-site overlay indicators from raster and vector layers.

Every zonal quantity follows the pixel-center rule (see rasters.py), so
each result can be reproduced exactly by enumerating pixels. Missing
layers or zones that miss the layer extent yield None ("not evaluable"),
never an exception: absence of evidence is data, not an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely

from .geometry import EARTH_RADIUS_KM, geodesic_ring_length_km, zone_area_km2
from .rasters import GridLayer, nearest_cell, zone_pixel_mask

LOSS_YEAR_MIN = 2001
LOSS_YEAR_MAX = 2023
PLANTING_YEAR_MIN = 2000
PLANTING_YEAR_MAX = 2023

CLIMATE_OFFSETS = (0, 1, 2, 5)


@dataclass
class LossWindows:
    """Tree-loss fractions around the planting year.

    ``pre5``/``pre1``/``post5`` are the fractions of zone pixels whose
    loss year falls in [y-5, y-1], {y-1} and [y+1, y+5] respectively,
    with windows clipped to the layer's year range; ``clipped`` marks
    windows that lost part of their span to that range.
    """

    pre5: float
    pre1: float
    post5: float
    clipped: bool


@dataclass
class AugmentationRecord:
    """All overlay results for one site; None marks a non-evaluable field."""

    site_id: str
    built_fraction: float | None = None
    water_fraction: float | None = None
    other_landcover_fraction: float | None = None
    stable_cropland_fraction: float | None = None
    treecover_at_planting_fraction: float | None = None
    cropland_from_tree_fraction: float | None = None
    cropland_to_tree_fraction: float | None = None
    short_veg_after_loss_fraction: float | None = None
    road_km_per_km2: float | None = None
    road_area_fraction: float | None = None
    loss_pre5: float | None = None
    loss_pre1: float | None = None
    loss_post5: float | None = None
    loss_windows_clipped: bool | None = None
    mean_elevation_m: float | None = None
    mean_slope_deg: float | None = None
    climate: dict = field(default_factory=dict)

    FRACTION_FIELDS = (
        "built_fraction",
        "water_fraction",
        "other_landcover_fraction",
        "stable_cropland_fraction",
        "treecover_at_planting_fraction",
        "cropland_from_tree_fraction",
        "cropland_to_tree_fraction",
        "short_veg_after_loss_fraction",
    )


def zonal_class_fraction(layer: GridLayer, zone_rings, classes) -> float | None:
    """Fraction of the zone's valid pixels whose value is in ``classes``.

    Denominator: pixels whose center is inside the zone, nodata excluded.
    None when the zone has no valid interior pixel on this layer.
    """
    mask = zone_pixel_mask(layer, zone_rings) & layer.valid_mask()
    denom = int(mask.sum())
    if denom == 0:
        return None
    values = layer.values[mask]
    hit = np.isin(values, np.asarray(sorted(classes)))
    return float(int(hit.sum())) / float(denom)


def tree_loss_windows(layer: GridLayer, zone_rings, planting_year: int) -> LossWindows | None:
    """Loss-fraction windows for a loss-year layer (0 = no loss, k = 2000+k)."""
    if not (PLANTING_YEAR_MIN <= planting_year <= PLANTING_YEAR_MAX):
        return None
    mask = zone_pixel_mask(layer, zone_rings) & layer.valid_mask()
    denom = int(mask.sum())
    if denom == 0:
        return None
    years = 2000 + layer.values[mask].astype(np.int64)
    loss = layer.values[mask] != 0  # value 0 means "no loss"

    def window_fraction(lo, hi):
        lo_c, hi_c = max(lo, LOSS_YEAR_MIN), min(hi, LOSS_YEAR_MAX)
        if lo_c > hi_c:
            return 0.0, True
        inside = loss & (years >= lo_c) & (years <= hi_c)
        return float(int(inside.sum())) / float(denom), (lo_c, hi_c) != (lo, hi)

    pre5, c1 = window_fraction(planting_year - 5, planting_year - 1)
    pre1, c2 = window_fraction(planting_year - 1, planting_year - 1)
    post5, c3 = window_fraction(planting_year + 1, planting_year + 5)
    return LossWindows(pre5, pre1, post5, c1 or c2 or c3)


def horn_slope_layer(dem: GridLayer) -> GridLayer:
    """Per-cell slope in degrees from the Horn 3x3 kernel.

    The DEM is edge-replicated so border cells get a value; any nodata in
    the 3x3 window makes the output cell NaN. Horizontal resolution is
    converted to meters with the local parallel/meridian scale per row.
    """
    z = dem.values.astype(np.float64)
    valid = dem.valid_mask()
    zp = np.pad(z, 1, mode="edge")
    vp = np.pad(valid, 1, mode="edge")

    a = zp[:-2, :-2]
    b = zp[:-2, 1:-1]
    c = zp[:-2, 2:]
    d = zp[1:-1, :-2]
    f = zp[1:-1, 2:]
    g = zp[2:, :-2]
    h = zp[2:, 1:-1]
    i = zp[2:, 2:]

    lat_c = np.radians(dem.center_lats())[:, None]
    meters_x = EARTH_RADIUS_KM * 1000.0 * math.radians(dem.pixel_size_lon) * np.cos(lat_c)
    meters_y = EARTH_RADIUS_KM * 1000.0 * math.radians(dem.pixel_size_lat)

    dzdx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * meters_x)
    dzdy = ((g + 2.0 * h + i) - (a + 2.0 * b + c)) / (8.0 * meters_y)
    slope = np.degrees(np.arctan(np.hypot(dzdx, dzdy)))

    ok = (
        vp[:-2, :-2] & vp[:-2, 1:-1] & vp[:-2, 2:]
        & vp[1:-1, :-2] & vp[1:-1, 1:-1] & vp[1:-1, 2:]
        & vp[2:, :-2] & vp[2:, 1:-1] & vp[2:, 2:]
    )
    slope[~ok] = np.nan
    return GridLayer(
        dem.origin_lon,
        dem.origin_lat,
        dem.pixel_size_lon,
        dem.pixel_size_lat,
        slope,
        nodata=float("nan"),
        semantics="continuous",
    )


@dataclass
class TerrainStats:
    mean_elevation_m: float
    mean_slope_deg: float | None


def terrain_stats(dem: GridLayer, zone_rings, slope: GridLayer | None = None) -> TerrainStats | None:
    """Mean elevation and Horn slope over the zone's valid pixels.

    ``slope`` may be passed in when the layer was precomputed once for a
    whole corpus; otherwise it is derived here.
    """
    mask = zone_pixel_mask(dem, zone_rings)
    elev_mask = mask & dem.valid_mask()
    if int(elev_mask.sum()) == 0:
        return None
    mean_elev = float(np.mean(dem.values[elev_mask].astype(np.float64)))
    if slope is None:
        slope = horn_slope_layer(dem)
    slope_mask = mask & slope.valid_mask()
    mean_slope = float(np.mean(slope.values[slope_mask])) if slope_mask.any() else None
    return TerrainStats(mean_elev, mean_slope)


def geodesic_line_length_km(coords: np.ndarray) -> float:
    return geodesic_ring_length_km(np.asarray(coords, dtype=np.float64))


def road_density(roads, zone_rings) -> float | None:
    """Clipped geodesic road length (km) per km2 of zone area.

    ``roads`` is a collection of polyline vertex arrays; an empty or
    missing collection is not evaluable (distinct from 0.0, which means
    the layer is present and no road touches the zone).
    """
    if roads is None or len(roads) == 0:
        return None
    area = zone_area_km2(zone_rings)
    if area <= 0.0:
        return None
    zone = shapely.Polygon(zone_rings[0], [r for r in zone_rings[1:]])
    total_km = 0.0
    for line in roads:
        clipped = shapely.intersection(shapely.LineString(line), zone)
        if clipped.is_empty:
            continue
        parts = shapely.get_parts(clipped) if clipped.geom_type != "LineString" else [clipped]
        for part in parts:
            if part.geom_type == "LineString":
                total_km += geodesic_line_length_km(np.asarray(part.coords))
    return total_km / area


def road_area_fraction(roads, zone_rings, buffer_m: float) -> float | None:
    """Zone fraction covered by roads widened to ``buffer_m`` each side.

    Supports the optional area-based road test; computed on the tangent
    plane at the zone centroid.
    """
    if roads is None or len(roads) == 0:
        return None
    from .geometry import ring_centroid, to_tangent_plane

    lon0, lat0 = ring_centroid(zone_rings[0])
    zone = shapely.Polygon(
        to_tangent_plane(zone_rings[0], lon0, lat0),
        [to_tangent_plane(r, lon0, lat0) for r in zone_rings[1:]],
    )
    if zone.area <= 0.0:
        return None
    buffered = []
    for line in roads:
        planar = to_tangent_plane(np.asarray(line, dtype=np.float64), lon0, lat0)
        buffered.append(shapely.LineString(planar).buffer(buffer_m / 1000.0))
    covered = shapely.union_all(buffered).intersection(zone)
    return covered.area / zone.area


def sample_climate_at_centroid(monthly_by_year, lon: float, lat: float, years) -> dict:
    """Mean of the 12 monthly nearest-cell samples, per requested year.

    ``monthly_by_year`` maps year -> sequence of 12 GridLayers (Jan..Dec).
    Years with missing months, out-of-extent centroids or nodata samples
    are not evaluable (None).
    """
    out = {}
    for year in years:
        months = monthly_by_year.get(year)
        if months is None or len(months) != 12:
            out[year] = None
            continue
        samples = []
        for layer in months:
            cell = nearest_cell(layer, lon, lat)
            if cell is None:
                samples = None
                break
            value = float(layer.values[cell])
            nodata = layer.nodata is not None and value == float(layer.nodata)
            if nodata or math.isnan(value):
                samples = None
                break
            samples.append(value)
        out[year] = float(np.mean(samples)) if samples else None
    return out
