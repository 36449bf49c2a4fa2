"""Duplicate, nesting and intersection detection across site polygons.

Candidate pairs come from a packed bounding-box tree; every candidate is
then classified by exact intersection-area ratios. A brute-force
all-pairs oracle with the same ratio arithmetic is provided for
verification, so the tree is only ever a candidate generator and can
never change the result.

Intersection areas are computed on the local tangent plane of the pair's
joint centroid when the pair spans less than SPHERICAL_SPAN_DEG degrees,
and with spherical ring sums otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import shapely
from shapely import STRtree

from .errors import DuplicateSiteIdError, LdisError
from .geometry import (
    ring_centroid,
    rings_bbox,
    spherical_area_km2,
    to_tangent_plane,
)

logger = logging.getLogger(__name__)

DEFAULT_DUP_THRESHOLD = 0.95
DEFAULT_ADMIN_THRESHOLD = 0.98

# beyond this bbox span, tangent-plane distortion is no longer negligible
SPHERICAL_SPAN_DEG = 5.0


@dataclass(frozen=True)
class RelationRecord:
    """Overlap relation between two sites.

    ratio_a (ratio_b) is the intersection area divided by the area of
    site_a (site_b). Records are emitted in both orientations; swapping
    the sites swaps the ratios and flips the nesting direction.
    """

    site_a: str
    site_b: str
    ratio_a: float
    ratio_b: float
    relation: str

    def mirrored(self) -> "RelationRecord":
        flip = {"a_nested_in_b": "b_nested_in_a", "b_nested_in_a": "a_nested_in_b"}
        return RelationRecord(
            self.site_b,
            self.site_a,
            self.ratio_b,
            self.ratio_a,
            flip.get(self.relation, self.relation),
        )


@dataclass(frozen=True)
class AdminMatch:
    """Best administrative-unit overlap for one site."""

    site: str
    admin_unit: str | None
    mutual: bool
    ratio_site: float
    ratio_admin: float


class SiteIndex:
    """Read-only bounding-box tree over site polygons.

    Queries return a superset of the truly intersecting sites; exactness
    is always established downstream via intersection areas.
    """

    def __init__(self, items):
        ids = []
        geoms = []
        seen = set()
        dupes = set()
        for site_id, rings in items:
            if site_id in seen:
                dupes.add(site_id)
            seen.add(site_id)
            ids.append(site_id)
            geoms.append(shapely.Polygon(rings[0], [r for r in rings[1:]]) if rings else None)
        if dupes:
            raise DuplicateSiteIdError(dupes)
        self.ids = ids
        self.geoms = np.array(geoms, dtype=object)
        self._tree = STRtree(self.geoms) if ids else None

    def __len__(self):
        return len(self.ids)

    def query_box(self, bbox) -> list:
        """Site ids whose bounding box overlaps (lon0, lat0, lon1, lat1)."""
        if self._tree is None:
            return []
        probe = shapely.box(*bbox)
        return sorted(self.ids[i] for i in self._tree.query(probe))

    def candidate_pairs(self) -> np.ndarray:
        """(m, 2) index pairs (i < j) whose bounding boxes overlap."""
        if self._tree is None:
            return np.empty((0, 2), dtype=np.int64)
        left, right = self._tree.query(self.geoms)
        keep = left < right
        return np.column_stack([left[keep], right[keep]])


def build_site_index(items) -> SiteIndex:
    """items: iterable of (site_id, rings) with derived polygons present."""
    return SiteIndex(items)


def _tangent_polygons(rings_a, rings_b):
    ca = ring_centroid(rings_a[0])
    cb = ring_centroid(rings_b[0])
    lon0, lat0 = (ca[0] + cb[0]) / 2.0, (ca[1] + cb[1]) / 2.0
    pa = shapely.Polygon(
        to_tangent_plane(rings_a[0], lon0, lat0),
        [to_tangent_plane(r, lon0, lat0) for r in rings_a[1:]],
    )
    pb = shapely.Polygon(
        to_tangent_plane(rings_b[0], lon0, lat0),
        [to_tangent_plane(r, lon0, lat0) for r in rings_b[1:]],
    )
    return pa, pb


def _spherical_geom_area(geom) -> float:
    total = 0.0
    for part in shapely.get_parts(geom) if geom.geom_type != "Polygon" else [geom]:
        if part.geom_type != "Polygon" or part.is_empty:
            continue
        rings = [np.asarray(part.exterior.coords)]
        rings.extend(np.asarray(i.coords) for i in part.interiors)
        total += spherical_area_km2(rings)
    return total


def pairwise_overlap_ratio(rings_a, rings_b, ids=None) -> tuple:
    """(intersection/area_a, intersection/area_b) for two valid polygons."""
    bbox_a = rings_bbox(rings_a)
    bbox_b = rings_bbox(rings_b)
    span = max(
        max(bbox_a[2], bbox_b[2]) - min(bbox_a[0], bbox_b[0]),
        max(bbox_a[3], bbox_b[3]) - min(bbox_a[1], bbox_b[1]),
    )
    try:
        if span < SPHERICAL_SPAN_DEG:
            pa, pb = _tangent_polygons(rings_a, rings_b)
            inter = pa.intersection(pb).area
            area_a, area_b = pa.area, pb.area
        else:
            pa = shapely.Polygon(rings_a[0], [r for r in rings_a[1:]])
            pb = shapely.Polygon(rings_b[0], [r for r in rings_b[1:]])
            inter = _spherical_geom_area(pa.intersection(pb))
            area_a = spherical_area_km2(rings_a)
            area_b = spherical_area_km2(rings_b)
    except shapely.errors.GEOSException as exc:
        pair = f" for pair {ids}" if ids else ""
        raise LdisError(f"intersection computation failed{pair}: {exc}") from exc
    if area_a <= 0.0 or area_b <= 0.0:
        pair = f" for pair {ids}" if ids else ""
        raise LdisError(f"zero-area polygon in overlap ratio{pair}")
    return min(inter / area_a, 1.0), min(inter / area_b, 1.0)


def classify_pair(site_a, site_b, ratio_a, ratio_b, t_dup) -> RelationRecord:
    """Threshold comparisons are strict: 'more than' t_dup."""
    if ratio_a == 0.0 and ratio_b == 0.0:
        relation = "disjoint"
    elif ratio_a > t_dup and ratio_b > t_dup:
        relation = "duplicate"
    elif ratio_a > t_dup:
        relation = "a_nested_in_b"
    elif ratio_b > t_dup:
        relation = "b_nested_in_a"
    else:
        relation = "intersecting"
    return RelationRecord(site_a, site_b, ratio_a, ratio_b, relation)


def _usable(rings) -> bool:
    if not rings:
        return False
    poly = shapely.Polygon(rings[0], [r for r in rings[1:]])
    return bool(shapely.is_valid(poly)) and poly.area > 0.0


def _classify_index_pairs(ids, all_rings, pairs, t_dup, usable):
    records = []
    for i, j in pairs:
        if not (usable[i] and usable[j]):
            continue
        # canonical orientation by site id: GEOS intersection is not
        # bit-commutative, so this keeps output independent of input order
        if ids[j] < ids[i]:
            i, j = j, i
        ratio_a, ratio_b = pairwise_overlap_ratio(
            all_rings[i], all_rings[j], ids=(ids[i], ids[j])
        )
        rec = classify_pair(ids[i], ids[j], ratio_a, ratio_b, t_dup)
        if rec.relation != "disjoint":
            records.append(rec)
            records.append(rec.mirrored())
    return records


def classify_relations(index: SiteIndex, all_rings, t_dup=DEFAULT_DUP_THRESHOLD) -> list:
    """Classify every overlapping pair found through the box tree.

    ``all_rings[i]`` must be the derived rings of ``index.ids[i]``.
    Invalid or zero-area members are skipped with a warning; disjoint
    candidates (boxes overlap, polygons do not) are not emitted. Output
    contains each touching pair in both orientations, sorted by
    (site_a, site_b), so it is independent of worker count and input
    order.
    """
    usable = [_usable(r) for r in all_rings]
    for sid, ok in zip(index.ids, usable):
        if not ok:
            logger.warning("site %s skipped in relation scan (invalid or zero-area)", sid)
    records = _classify_index_pairs(index.ids, all_rings, index.candidate_pairs(), t_dup, usable)
    records.sort(key=lambda r: (r.site_a, r.site_b))
    return records


def brute_force_relations(items, t_dup=DEFAULT_DUP_THRESHOLD, prefilter_boxes=False) -> list:
    """All-pairs oracle with the same ratio arithmetic as the tree path.

    With ``prefilter_boxes`` the exact-area step only runs for pairs whose
    bounding boxes overlap; since disjoint boxes imply zero intersection
    area (never emitted), the output is identical while large corpora stay
    tractable. The scan itself remains O(n^2) either way.
    """
    ids = [sid for sid, _ in items]
    all_rings = [r for _, r in items]
    usable = [_usable(r) for r in all_rings]
    n = len(ids)
    if prefilter_boxes:
        boxes = np.array([rings_bbox(r) if r else (0, 0, 0, 0) for r in all_rings])
        pairs = []
        for i in range(n - 1):
            js = np.arange(i + 1, n)
            overlap = (
                (boxes[js, 0] <= boxes[i, 2])
                & (boxes[js, 2] >= boxes[i, 0])
                & (boxes[js, 1] <= boxes[i, 3])
                & (boxes[js, 3] >= boxes[i, 1])
            )
            pairs.extend((i, int(j)) for j in js[overlap])
    else:
        pairs = [(i, j) for i in range(n - 1) for j in range(i + 1, n)]
    records = _classify_index_pairs(ids, all_rings, pairs, t_dup, usable)
    records.sort(key=lambda r: (r.site_a, r.site_b))
    return records


class AdminLayer:
    """Indexed administrative polygons for resemblance checks."""

    def __init__(self, items):
        self.ids = [admin_id for admin_id, _ in items]
        self.rings = [rings for _, rings in items]
        geoms = np.array(
            [shapely.Polygon(r[0], [h for h in r[1:]]) for r in self.rings], dtype=object
        )
        self._tree = STRtree(geoms) if self.ids else None
        self._geoms = geoms

    def __len__(self):
        return len(self.ids)


def admin_area_match(
    site_id, site_rings, admin: AdminLayer, threshold=DEFAULT_ADMIN_THRESHOLD
) -> AdminMatch | None:
    """Best mutual-overlap admin unit for a site, None when the layer is empty.

    ``mutual`` requires both overlap ratios to exceed the threshold
    ('more than 98%' by default). The best unit maximises the smaller of
    the two ratios; ties break toward the lexicographically smallest
    admin id.
    """
    if admin is None or len(admin) == 0:
        return None
    probe = shapely.box(*rings_bbox(site_rings))
    candidates = sorted(admin._tree.query(probe), key=lambda idx: admin.ids[idx])
    best = AdminMatch(site_id, None, False, 0.0, 0.0)
    for idx in candidates:
        ratio_site, ratio_admin = pairwise_overlap_ratio(
            site_rings, admin.rings[idx], ids=(site_id, admin.ids[idx])
        )
        if min(ratio_site, ratio_admin) > min(best.ratio_site, best.ratio_admin):
            best = AdminMatch(
                site_id,
                admin.ids[idx],
                ratio_site > threshold and ratio_admin > threshold,
                ratio_site,
                ratio_admin,
            )
    return best
