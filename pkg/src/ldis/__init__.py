"""Location-data integrity scoring for georeferenced planting sites.

A batch toolkit that ingests site catalogs (GeoJSON + CSV metadata),
derives working polygons, detects duplicate/nested/intersecting sites,
overlays raster and vector layers, computes vegetation-index series
around the planting date, evaluates ten binary location-data integrity
indicators per site (the LDIS), and provides the statistical validation
tools (difference-in-differences, bootstrap intervals, synthetic
controls, confusion metrics) used to sanity-check the indicators.
"""

from .errors import (
    AnnulusConstructionError,
    ConfigError,
    CoordinateError,
    DegenerateGeometryError,
    DegeneratePanelError,
    DuplicateSiteIdError,
    InsufficientDataError,
    LdisError,
    UnsupportedLatitudeError,
)
from .geometry import (
    EARTH_RADIUS_KM,
    GeometryQuality,
    SiteGeometry,
    assess_geometry,
    circularity,
    derive_geometry,
    geometry_from_geojson,
    outer_buffer_annulus,
    spherical_area_km2,
    validate_geometry,
    zone_area_km2,
)

__version__ = "0.1.0"
