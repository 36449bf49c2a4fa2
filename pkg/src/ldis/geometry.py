"""Planting-site geometry primitives on the WGS84 sphere.

Coordinates are lon/lat degrees (WGS84). Polygons are tuples of closed
rings, each a float64 array of shape (n, 2) whose first and last vertex
coincide; ring 0 is the shell, later rings are holes. Areas use a single
authalic sphere so identical input always yields identical output; the
bias against ellipsoidal areas is below 0.3%. Shape metrics (circularity)
are computed on the local tangent plane at the polygon centroid.

All functions here are pure and operate on immutable inputs, so they are
safe to call from any number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import shapely

from .errors import (
    AnnulusConstructionError,
    CoordinateError,
    DegenerateGeometryError,
    UnsupportedLatitudeError,
)

# Authalic (equal-area) sphere radius in km.
EARTH_RADIUS_KM = 6371.0088

# Circle discretisation for buffered point locations. 64 segments keep the
# area error of the polygonal approximation under 0.2%.
POINT_BUFFER_SEGMENTS = 64
DEFAULT_POINT_BUFFER_M = 100.0
DEFAULT_ANNULUS_M = 500.0

# Geodesic point buffers degenerate near the poles (longitude scale
# vanishes); sites this far north/south are refused rather than mangled.
MAX_POINT_BUFFER_LAT = 89.9

Ring = np.ndarray
Rings = tuple


@dataclass(frozen=True)
class SiteGeometry:
    """Reported geometry of one planting site plus its derived polygon.

    ``kind`` describes the geometry as reported ("point", "polygon" or
    "multipart"); ``derived_rings`` is filled by :func:`derive_geometry`
    and is always a single polygon (shell first, holes after). ``parts``
    gives the ring count of each part for multipart input.
    """

    kind: str
    reported_rings: tuple = ()
    point: tuple | None = None
    parts: tuple = ()
    derived_rings: tuple = ()
    centroid: tuple | None = None

    @property
    def is_point_origin(self) -> bool:
        return self.kind == "point"


@dataclass(frozen=True)
class GeometryQuality:
    """Validity and shape metrics for one site geometry.

    ``validate_geometry`` fills only the validity fields; the remaining
    metrics are populated by :func:`assess_geometry` once a derived
    polygon exists. ``circularity`` is only defined for valid polygons.
    """

    is_valid: bool
    invalid_reason: str | None = None
    circularity: float | None = None
    is_perfectly_circular: bool | None = None
    is_point_origin: bool = False
    area_km2: float | None = None
    perimeter_km: float | None = None


def _as_ring(coords) -> Ring:
    arr = np.asarray(coords, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise CoordinateError(f"ring must be an (n, 2) coordinate array, got shape {arr.shape}")
    return arr


def check_coordinates(rings, site_id=None) -> None:
    """Reject non-finite or out-of-domain coordinates, naming the vertex."""
    for ri, ring in enumerate(rings):
        finite = np.isfinite(ring)
        if not finite.all():
            vi = int(np.argwhere(~finite.all(axis=1))[0, 0])
            raise CoordinateError("non-finite coordinate", ring=ri, vertex=vi, site_id=site_id)
        lon, lat = ring[:, 0], ring[:, 1]
        bad = (lon < -180.0) | (lon > 180.0) | (lat < -90.0) | (lat > 90.0)
        if bad.any():
            vi = int(np.argmax(bad))
            raise CoordinateError(
                f"coordinate outside lon/lat domain: {tuple(ring[vi])}",
                ring=ri,
                vertex=vi,
                site_id=site_id,
            )


def ring_is_closed(ring: Ring) -> bool:
    return len(ring) >= 4 and bool(np.all(ring[0] == ring[-1]))


def _shapely_polygon(rings) -> shapely.Polygon:
    return shapely.Polygon(rings[0], [r for r in rings[1:]])


def validate_geometry(g: SiteGeometry, site_id=None) -> GeometryQuality:
    """Check closure, simplicity and non-zero area of the reported rings.

    A bare point is a valid report but not a valid polygon; it becomes one
    after :func:`derive_geometry` buffers it. Coordinate-domain violations
    raise :class:`CoordinateError`; every topological defect is reported
    through ``is_valid``/``invalid_reason`` instead.
    """
    if g.kind == "point":
        lon, lat = g.point
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise CoordinateError("non-finite coordinate", ring=0, vertex=0, site_id=site_id)
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            raise CoordinateError(
                f"coordinate outside lon/lat domain: ({lon}, {lat})",
                ring=0,
                vertex=0,
                site_id=site_id,
            )
        return GeometryQuality(is_valid=False, invalid_reason="point geometry", is_point_origin=True)

    check_coordinates(g.reported_rings, site_id)
    for ri, ring in enumerate(g.reported_rings):
        if len(ring) < 4:
            return GeometryQuality(False, f"ring {ri} has fewer than 4 vertices")
        if not ring_is_closed(ring):
            return GeometryQuality(False, f"ring {ri} is not closed")

    # Shapely would silently close open rings, so closure is checked above
    # before topology is delegated to it.
    offset = 0
    for part_len in g.parts or (len(g.reported_rings),):
        part = g.reported_rings[offset : offset + part_len]
        offset += part_len
        poly = _shapely_polygon(part)
        if not shapely.is_valid(poly):
            return GeometryQuality(False, shapely.is_valid_reason(poly))
        if poly.area == 0.0:
            return GeometryQuality(False, "zero-area polygon")
    return GeometryQuality(True)


def ring_centroid(ring: Ring) -> tuple:
    """Shoelace centroid of a closed ring in its own coordinates.

    Falls back to the vertex mean for zero-area rings. Either way the
    result lies inside the ring's bounding box.
    """
    x, y = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    cross = x * y2 - x2 * y
    a = cross.sum() / 2.0
    if a == 0.0:
        return float(x.mean()), float(y.mean())
    cx = ((x + x2) * cross).sum() / (6.0 * a)
    cy = ((y + y2) * cross).sum() / (6.0 * a)
    return float(cx), float(cy)


def to_tangent_plane(ring: Ring, lon0: float, lat0: float) -> Ring:
    """Project lon/lat degrees to km on the tangent plane at (lon0, lat0)."""
    k = EARTH_RADIUS_KM * math.pi / 180.0
    out = np.empty_like(ring)
    out[:, 0] = (ring[:, 0] - lon0) * (k * math.cos(math.radians(lat0)))
    out[:, 1] = (ring[:, 1] - lat0) * k
    return out


def from_tangent_plane(xy: Ring, lon0: float, lat0: float) -> Ring:
    k = EARTH_RADIUS_KM * math.pi / 180.0
    out = np.empty_like(xy)
    out[:, 0] = xy[:, 0] / (k * math.cos(math.radians(lat0))) + lon0
    out[:, 1] = xy[:, 1] / k + lat0
    return out


def _planar_area(ring: Ring) -> float:
    x, y = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    return float(np.sum(x * y2 - x2 * y) / 2.0)


def _planar_perimeter(ring: Ring) -> float:
    return float(np.sum(np.hypot(np.diff(ring[:, 0]), np.diff(ring[:, 1]))))


def circularity(rings, site_id=None) -> float:
    """Isoperimetric quotient 4*pi*A/P**2 on the local tangent plane.

    1.0 for a circle, pi/4 for a square, ->0 for elongated slivers. Area
    is shell minus holes; the perimeter includes hole boundaries. The
    value is scale-invariant and clamped to (0, 1].
    """
    lon0, lat0 = ring_centroid(rings[0])
    planar = [to_tangent_plane(r, lon0, lat0) for r in rings]
    area = abs(_planar_area(planar[0])) - sum(abs(_planar_area(r)) for r in planar[1:])
    perimeter = sum(_planar_perimeter(r) for r in planar)
    if area <= 0.0 or perimeter <= 0.0:
        raise DegenerateGeometryError(
            f"circularity undefined for zero-area geometry{f' (site {site_id})' if site_id else ''}"
        )
    return min(4.0 * math.pi * area / perimeter**2, 1.0)


def geodesic_ring_length_km(ring: Ring) -> float:
    """Great-circle length of a ring's edges (haversine on the sphere)."""
    lon = np.radians(ring[:, 0])
    lat = np.radians(ring[:, 1])
    dlon = np.diff(lon)
    dlat = np.diff(lat)
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat[:-1]) * np.cos(lat[1:]) * np.sin(dlon / 2.0) ** 2
    return float(EARTH_RADIUS_KM * np.sum(2.0 * np.arcsin(np.sqrt(h))))


def spherical_ring_area_km2(ring: Ring) -> float:
    """Unsigned spherical-excess area of one ring on the authalic sphere.

    Uses the discrete line integral sum((lon2 - lon1) * (sin(lat1) +
    sin(lat2)) / 2) * R**2, which is exact for edges that interpolate
    linearly in lon/lat (the convention GeoJSON rings follow) up to the
    second order in edge length. Invariant under ring rotation and
    orientation reversal.
    """
    lon = np.radians(ring[:, 0])
    lat = np.radians(ring[:, 1])
    s = np.sin(lat)
    terms = (lon[1:] - lon[:-1]) * (s[:-1] + s[1:])
    return abs(float(np.sum(terms))) / 2.0 * EARTH_RADIUS_KM**2


def spherical_area_km2(rings) -> float:
    """Polygon area in km2 on the authalic sphere: shell minus holes."""
    area = spherical_ring_area_km2(rings[0])
    for hole in rings[1:]:
        area -= spherical_ring_area_km2(hole)
    return max(area, 0.0)


def _close(ring: Ring) -> Ring:
    if ring_is_closed(ring):
        return ring
    return np.vstack([ring, ring[:1]])


def _geodesic_circle(lon: float, lat: float, radius_m: float, segments: int) -> Ring:
    """Regular polygon of geodesic radius ``radius_m`` around a point."""
    delta = radius_m / 1000.0 / EARTH_RADIUS_KM
    theta = 2.0 * math.pi * np.arange(segments) / segments
    phi1 = math.radians(lat)
    lam1 = math.radians(lon)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * np.cos(theta)
    phi2 = np.arcsin(sin_phi2)
    lam2 = lam1 + np.arctan2(
        np.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * sin_phi2,
    )
    ring = np.column_stack([np.degrees(lam2), np.degrees(phi2)])
    return _close(ring)


def derive_geometry(
    g: SiteGeometry,
    point_buffer_m: float = DEFAULT_POINT_BUFFER_M,
    segments: int = POINT_BUFFER_SEGMENTS,
) -> list:
    """Produce the working polygon(s) for a reported geometry.

    Points are replaced by a regular ``segments``-gon of geodesic radius
    ``point_buffer_m``. Polygons pass through unchanged (idempotent).
    Multipart geometries split into one SiteGeometry per part, in the
    reported order; the caller is responsible for suffixing site ids.
    """
    if g.kind == "point":
        lon, lat = g.point
        if abs(lat) > MAX_POINT_BUFFER_LAT:
            raise UnsupportedLatitudeError(f"cannot buffer point at latitude {lat}")
        ring = _geodesic_circle(lon, lat, point_buffer_m, segments)
        return [replace(g, derived_rings=(ring,), centroid=(lon, lat))]

    if g.kind == "multipart":
        out = []
        offset = 0
        for part_len in g.parts:
            part = g.reported_rings[offset : offset + part_len]
            offset += part_len
            out.append(
                SiteGeometry(
                    kind="polygon",
                    reported_rings=part,
                    derived_rings=part,
                    centroid=ring_centroid(part[0]),
                )
            )
        return out

    return [replace(g, derived_rings=g.reported_rings, centroid=ring_centroid(g.reported_rings[0]))]


def outer_buffer_annulus(rings, distance_m: float = DEFAULT_ANNULUS_M, quad_segs: int = 16):
    """Annular region between a polygon's boundary and its outward offset.

    Returns the region as a tuple of closed lon/lat rings with even-odd
    semantics (for the plain annulus: outer shell plus the original
    boundary as a hole), so area(annulus) = area(offset) - area(polygon).
    ``distance_m`` of zero yields an empty tuple.
    """
    if distance_m < 0:
        raise ValueError("offset distance must be >= 0")
    if distance_m == 0:
        return ()
    lon0, lat0 = ring_centroid(rings[0])
    planar = [to_tangent_plane(r, lon0, lat0) for r in rings]
    poly = _shapely_polygon(planar)
    if not poly.is_valid or poly.area == 0.0:
        raise AnnulusConstructionError("offset source polygon is invalid or degenerate")
    offset = poly.buffer(distance_m / 1000.0, quad_segs=quad_segs)
    annulus = offset.difference(poly)
    if annulus.is_empty or not annulus.is_valid:
        raise AnnulusConstructionError(
            f"offset difference produced {shapely.is_valid_reason(annulus)}"
        )
    parts = annulus.geoms if annulus.geom_type == "MultiPolygon" else [annulus]
    out = []
    for part in parts:
        out.append(from_tangent_plane(np.asarray(part.exterior.coords), lon0, lat0))
        for interior in part.interiors:
            out.append(from_tangent_plane(np.asarray(interior.coords), lon0, lat0))
    return tuple(out)


def points_in_rings(x: np.ndarray, y: np.ndarray, rings) -> np.ndarray:
    """Even-odd containment test of points against a set of closed rings.

    Classic crossing-parity rule, vectorised over the points. Handles
    holes and disjoint shells uniformly: a point is inside when it is
    enclosed by an odd number of ring boundaries. Points exactly on a
    boundary follow the parity rule's convention and should not be
    relied upon.
    """
    inside = np.zeros(x.shape, dtype=bool)
    for ring in rings:
        rx, ry = ring[:, 0], ring[:, 1]
        for i in range(len(ring) - 1):
            x1, y1 = rx[i], ry[i]
            x2, y2 = rx[i + 1], ry[i + 1]
            if y1 == y2:
                continue
            crosses = (y1 > y) != (y2 > y)
            if not crosses.any():
                continue
            xi = (x2 - x1) * (y - y1) / (y2 - y1) + x1
            inside ^= crosses & (x < xi)
    return inside


def point_in_rings(lon: float, lat: float, rings) -> bool:
    return bool(points_in_rings(np.asarray([lon]), np.asarray([lat]), rings)[0])


def zone_area_km2(rings) -> float:
    """Spherical area of an even-odd ring set (shells minus holes).

    Ring nesting depth is established by testing a vertex of each ring
    against the others; even depth adds, odd depth subtracts.
    """
    if not rings:
        return 0.0
    total = 0.0
    for i, ring in enumerate(rings):
        depth = 0
        for j, other in enumerate(rings):
            if i != j and point_in_rings(ring[0, 0], ring[0, 1], (other,)):
                depth += 1
        sign = -1.0 if depth % 2 else 1.0
        total += sign * spherical_ring_area_km2(ring)
    return max(total, 0.0)


def rings_bbox(rings) -> tuple:
    """(min lon, min lat, max lon, max lat) over every ring vertex."""
    lo = np.array([r.min(axis=0) for r in rings]).min(axis=0)
    hi = np.array([r.max(axis=0) for r in rings]).max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def assess_geometry(
    g: SiteGeometry, circle_threshold: float = 0.98, site_id=None
) -> GeometryQuality:
    """Full quality record: validity of the reported rings plus shape
    metrics of the derived polygon.

    Point-origin sites are assessed on their derived buffer polygon (the
    reported point is not a valid polygon by itself) and keep
    ``is_point_origin`` set. ``is_perfectly_circular`` compares the
    tangent-plane circularity against ``circle_threshold``.
    """
    if not g.derived_rings:
        raise DegenerateGeometryError("assess_geometry requires a derived polygon")
    if g.kind == "point":
        validity = GeometryQuality(is_valid=True, is_point_origin=True)
    else:
        validity = validate_geometry(g, site_id=site_id)
    if not validity.is_valid:
        return validity
    area = spherical_area_km2(g.derived_rings)
    perimeter = sum(geodesic_ring_length_km(r) for r in g.derived_rings)
    try:
        circ = circularity(g.derived_rings, site_id=site_id)
    except DegenerateGeometryError:
        return GeometryQuality(False, "zero-area polygon", is_point_origin=g.is_point_origin)
    return GeometryQuality(
        is_valid=True,
        circularity=circ,
        is_perfectly_circular=circ >= circle_threshold,
        is_point_origin=g.is_point_origin,
        area_km2=area,
        perimeter_km=perimeter,
    )


def geometry_from_geojson(geom: dict) -> SiteGeometry:
    """Build a SiteGeometry from a GeoJSON geometry mapping.

    Supports Point, Polygon and MultiPolygon. Rings are kept exactly as
    reported (no closing, no reorientation) so that validity reflects the
    published data.
    """
    gtype = geom.get("type")
    coords = geom.get("coordinates")
    if gtype == "Point":
        return SiteGeometry(kind="point", point=(float(coords[0]), float(coords[1])))
    if gtype == "Polygon":
        rings = tuple(_as_ring(r) for r in coords)
        if not rings:
            raise CoordinateError("polygon has no rings")
        return SiteGeometry(kind="polygon", reported_rings=rings, parts=(len(rings),))
    if gtype == "MultiPolygon":
        rings = []
        parts = []
        for part in coords:
            parts.append(len(part))
            rings.extend(_as_ring(r) for r in part)
        if not rings:
            raise CoordinateError("multipolygon has no rings")
        if len(parts) == 1:
            return SiteGeometry(kind="polygon", reported_rings=tuple(rings), parts=tuple(parts))
        return SiteGeometry(kind="multipart", reported_rings=tuple(rings), parts=tuple(parts))
    raise CoordinateError(f"unsupported geometry type: {gtype}")
