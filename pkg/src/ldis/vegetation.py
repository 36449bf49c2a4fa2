"""Vegetation-index band math and site/annulus zone series.

Index definitions (surface reflectance bands):

    ndvi = (nir - red) / (nir + red)
    ndre = (nir - rededge) / (nir + rededge)
    savi = (nir - red) / (nir + red + L) * (1 + L),  L = 0.5

SAVI uses the red band with the standard soil-adjustment factor; that is
what "correcting NDVI for soil brightness" requires, and red-edge based
variants are not supported.

Annual values are built from the three greenest months (highest monthly
zonal NDVI in a reference year), median-compositing the accepted scenes
of those months per period before the index is computed. Scenes whose
cloud fraction over the site footprint is not strictly below the
threshold are dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rasters import GridLayer, zone_pixel_mask

logger = logging.getLogger(__name__)

SAVI_L = 0.5
INDICES = ("ndvi", "ndre", "savi")
INDEX_BANDS = {"ndvi": ("nir", "red"), "ndre": ("nir", "rededge"), "savi": ("nir", "red")}

DEFAULT_MAX_CLOUD_FRACTION = 0.20
PERIODS = (-1, 0, 1, 2, 5)
ZONES = ("annulus", "site")


@dataclass
class BandStack:
    """Co-registered reflectance bands for one scene (year, month)."""

    bands: dict
    year: int
    month: int

    def __post_init__(self):
        shapes = {name: layer.values.shape for name, layer in self.bands.items()}
        if len(set(shapes.values())) > 1:
            raise ConfigError(f"band grids disagree in shape: {shapes}")

    def band(self, name: str) -> GridLayer:
        if name not in self.bands:
            raise ConfigError(f"band stack {self.year}-{self.month:02d} is missing band '{name}'")
        return self.bands[name]

    def grid(self) -> GridLayer:
        return next(iter(self.bands.values()))


@dataclass(frozen=True)
class ZoneIndexSeries:
    """Zonal mean of one index for one zone and period around planting."""

    site_id: str
    zone: str  # "site" | "annulus"
    period: int  # years relative to planting
    index: str
    mean_value: float | None
    pixel_count: int
    evaluable: bool


@dataclass(frozen=True)
class ScreenResult:
    keep: bool
    cloud_fraction: float | None
    reason: str | None = None


def _band_values(layer: GridLayer) -> np.ndarray:
    values = layer.values.astype(np.float64)
    if layer.nodata is not None and not np.isnan(layer.nodata):
        values = np.where(layer.values == layer.nodata, np.nan, values)
    return values


def compute_index(stack: BandStack, index: str) -> GridLayer:
    """Per-pixel vegetation index; zero denominators and nodata become NaN."""
    if index not in INDEX_BANDS:
        raise ConfigError(f"unknown vegetation index '{index}'")
    nir = _band_values(stack.band("nir"))
    other = _band_values(stack.band(INDEX_BANDS[index][1]))
    if index == "savi":
        denom = nir + other + SAVI_L
        scale = 1.0 + SAVI_L
    else:
        denom = nir + other
        scale = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        values = (nir - other) / denom * scale
    values[denom == 0.0] = np.nan
    ref = stack.grid()
    return GridLayer(
        ref.origin_lon,
        ref.origin_lat,
        ref.pixel_size_lon,
        ref.pixel_size_lat,
        values,
        nodata=float("nan"),
        semantics="continuous",
    )


def cloud_fraction_screen(
    stack: BandStack, zone_rings, max_fraction: float = DEFAULT_MAX_CLOUD_FRACTION
) -> ScreenResult:
    """Keep a scene iff its cloudy fraction over the zone is strictly below
    ``max_fraction`` (a scene at exactly the threshold is rejected)."""
    qa = stack.band("qa_cloud")
    mask = zone_pixel_mask(qa, zone_rings) & qa.valid_mask()
    total = int(mask.sum())
    if total == 0:
        return ScreenResult(False, None, "no valid pixels over the zone")
    cloudy = int((qa.values[mask] == 1).sum())
    fraction = cloudy / total
    if fraction < max_fraction:
        return ScreenResult(True, fraction)
    return ScreenResult(False, fraction, f"cloud fraction {fraction:.3f} >= {max_fraction}")


def top_green_months(monthly_means) -> list | None:
    """Indices (1..12) of the three greenest months.

    ``monthly_means`` holds 12 zonal NDVI means with None for missing
    months. Ties break toward the earlier month; fewer than three valid
    months is not evaluable.
    """
    if len(monthly_means) != 12:
        raise ConfigError("monthly means must have exactly 12 entries")
    valid = [(value, month) for month, value in enumerate(monthly_means, start=1) if value is not None]
    if len(valid) < 3:
        return None
    ranked = sorted(valid, key=lambda pair: (-pair[0], pair[1]))
    return sorted(month for _, month in ranked[:3])


def median_composite(stacks, band_name: str) -> GridLayer:
    """Per-pixel median of one band across scenes; NaN where no scene has data."""
    if not stacks:
        raise ConfigError("median composite of zero stacks")
    values = np.stack([_band_values(s.band(band_name)) for s in stacks])
    with np.errstate(all="ignore"):
        med = np.nanmedian(values, axis=0)
    ref = stacks[0].band(band_name)
    return GridLayer(
        ref.origin_lon,
        ref.origin_lat,
        ref.pixel_size_lon,
        ref.pixel_size_lat,
        med,
        nodata=float("nan"),
        semantics="continuous",
    )


def monthly_zone_ndvi_means(stacks, zone_rings) -> list:
    """Monthly (Jan..Dec) zonal NDVI means used to pick the greenest months."""
    out = []
    for month in range(1, 13):
        scenes = sorted(
            (s for s in stacks if s.month == month), key=lambda s: (s.year, s.month)
        )
        if not scenes:
            out.append(None)
            continue
        bands = {
            "nir": median_composite(scenes, "nir"),
            "red": median_composite(scenes, "red"),
        }
        ndvi = compute_index(BandStack(bands, scenes[0].year, month), "ndvi")
        mask = zone_pixel_mask(ndvi, zone_rings) & ndvi.valid_mask()
        out.append(float(np.mean(ndvi.values[mask])) if mask.any() else None)
    return out


def zone_index_series(
    stacks_by_period,
    site_id: str,
    site_rings,
    annulus_rings,
    months,
    indices=INDICES,
    max_cloud_fraction: float = DEFAULT_MAX_CLOUD_FRACTION,
) -> list:
    """One record per (zone, period, index) from greenest-month composites.

    ``stacks_by_period`` maps a period offset (years relative to planting)
    to the candidate scenes of that period's calendar year. Scenes outside
    the chosen months or failing the cloud screen over the site footprint
    are dropped; a period left with no accepted scene emits non-evaluable
    records. Output ordering is (site, zone, period, index), independent
    of the order scenes are supplied.
    """
    zones = {"site": site_rings, "annulus": annulus_rings}
    records = []
    for period in sorted(stacks_by_period):
        scenes = [s for s in stacks_by_period[period] if s.month in months]
        accepted = sorted(
            (s for s in scenes if cloud_fraction_screen(s, site_rings, max_cloud_fraction).keep),
            key=lambda s: (s.year, s.month),
        )
        if not accepted:
            for zone_name in ZONES:
                for index in indices:
                    records.append(
                        ZoneIndexSeries(site_id, zone_name, period, index, None, 0, False)
                    )
            continue
        band_names = sorted({b for index in indices for b in INDEX_BANDS[index]})
        composite = BandStack(
            {name: median_composite(accepted, name) for name in band_names},
            accepted[0].year,
            0,
        )
        index_layers = {index: compute_index(composite, index) for index in indices}
        for zone_name in ZONES:
            rings = zones[zone_name]
            for index in indices:
                layer = index_layers[index]
                mask = zone_pixel_mask(layer, rings) & layer.valid_mask()
                count = int(mask.sum())
                if count == 0:
                    records.append(
                        ZoneIndexSeries(site_id, zone_name, period, index, None, 0, False)
                    )
                else:
                    mean = float(np.mean(layer.values[mask]))
                    records.append(
                        ZoneIndexSeries(site_id, zone_name, period, index, mean, count, True)
                    )
    records.sort(key=lambda r: (r.site_id, r.zone, r.period, r.index))
    return records
