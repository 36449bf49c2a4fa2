"""Shared fixture builders for synthetic sites, grids and layers."""

from __future__ import annotations

import math
import re

import numpy as np

from ldis.geometry import EARTH_RADIUS_KM, from_tangent_plane

ACCEPTANCE_TITLES = {
    1: "point-buffer law",
    2: "relation oracle equivalence",
    3: "zonal statistics oracle equivalence",
    4: "DiD closed form and coverage",
    5: "vegetation index math and cloud boundary",
    6: "bootstrap coverage",
    7: "determinism and performance",
    8: "synthetic-control sanity",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
            if m:
                n = int(m.group(1))
                ok = outcome == "passed" and results.get(n, True)
                results[n] = ok
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status = "PASS" if results[n] else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {n} ({ACCEPTANCE_TITLES[n]}): {status}")


def ring_from_km(xy_km, lon0=36.0, lat0=-1.0):
    """Close an open vertex list given in tangent-plane km and lift it to lon/lat."""
    arr = np.asarray(xy_km, dtype=np.float64)
    if not np.all(arr[0] == arr[-1]):
        arr = np.vstack([arr, arr[:1]])
    return from_tangent_plane(arr, lon0, lat0)


def square_ring_km(cx, cy, half, lon0=36.0, lat0=-1.0):
    """Axis-aligned square of half-width ``half`` km centred at (cx, cy) km."""
    return ring_from_km(
        [
            [cx - half, cy - half],
            [cx + half, cy - half],
            [cx + half, cy + half],
            [cx - half, cy + half],
        ],
        lon0,
        lat0,
    )


def rect_ring_deg(lon_min, lat_min, lon_max, lat_max):
    """Closed lon/lat rectangle ring."""
    return np.array(
        [
            [lon_min, lat_min],
            [lon_max, lat_min],
            [lon_max, lat_max],
            [lon_min, lat_max],
            [lon_min, lat_min],
        ],
        dtype=np.float64,
    )


def regular_ngon_ring(n, radius_km=1.0, lon0=36.0, lat0=-1.0, scale=1.0):
    """Regular n-gon built in the tangent plane then lifted to lon/lat."""
    theta = 2.0 * math.pi * np.arange(n) / n
    xy = np.column_stack([np.cos(theta), np.sin(theta)]) * radius_km * scale
    return ring_from_km(xy, lon0, lat0)


def km_per_deg(lat=0.0):
    return EARTH_RADIUS_KM * math.pi / 180.0 * math.cos(math.radians(lat))


def random_simple_polygon(rng, cx, cy, mean_radius, n_verts=8, lon0=36.0, lat0=-1.0):
    """Star-shaped (hence simple) random polygon around (cx, cy) km."""
    theta = np.sort(rng.uniform(0.0, 2.0 * math.pi, n_verts))
    radii = rng.uniform(0.4, 1.0, n_verts) * mean_radius
    xy = np.column_stack([cx + radii * np.cos(theta), cy + radii * np.sin(theta)])
    return ring_from_km(xy, lon0, lat0)
