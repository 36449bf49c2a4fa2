import numpy as np
import pytest
import shapely

from ldis.errors import ConfigError
from ldis.rasters import (
    GridLayer,
    nearest_cell,
    read_ascii_grid,
    read_geotiff,
    read_layer,
    write_ascii_grid,
    write_geotiff,
    zone_pixel_mask,
)

from conftest import rect_ring_deg


def make_layer(width=20, height=15, origin=(30.0, 2.0), px=0.01, values=None, nodata=None):
    if values is None:
        values = np.arange(height * width, dtype=np.float64).reshape(height, width)
    return GridLayer(origin[0], origin[1], px, px, values, nodata)


class TestGridLayer:
    def test_centers_and_extent(self):
        layer = make_layer()
        assert layer.center_lons()[0] == pytest.approx(30.005)
        assert layer.center_lats()[0] == pytest.approx(1.995)
        assert layer.extent() == pytest.approx((30.0, 1.85, 30.2, 2.0))

    def test_valid_mask_with_sentinel_and_nan(self):
        values = np.array([[1.0, -9999.0], [np.nan, 4.0]])
        layer = GridLayer(0, 1, 0.5, 0.5, values, nodata=-9999.0)
        np.testing.assert_array_equal(layer.valid_mask(), [[True, False], [False, True]])

    def test_rejects_bad_shapes(self):
        with pytest.raises(ConfigError):
            GridLayer(0, 0, 0.1, 0.1, np.zeros(5))
        with pytest.raises(ConfigError):
            GridLayer(0, 0, -0.1, 0.1, np.zeros((2, 2)))


class TestNearestCell:
    def test_interior_point(self):
        layer = make_layer()
        assert nearest_cell(layer, 30.005, 1.995) == (0, 0)
        assert nearest_cell(layer, 30.195, 1.855) == (14, 19)

    def test_boundary_tie_breaks_to_lower_index(self):
        # power-of-two cell size so the boundary coordinates are exact
        layer = make_layer(origin=(30.0, 2.0), px=0.25)
        # exactly on the boundary between columns 4 and 5
        assert nearest_cell(layer, 30.0 + 5 * 0.25, 1.875) == (0, 4)
        # exactly on the boundary between rows 2 and 3
        assert nearest_cell(layer, 30.125, 2.0 - 3 * 0.25) == (2, 0)

    def test_outer_edges_clamp_inward(self):
        layer = make_layer()
        assert nearest_cell(layer, 30.0, 2.0) == (0, 0)
        assert nearest_cell(layer, 30.2, 1.85) == (14, 19)

    def test_outside_returns_none(self):
        layer = make_layer()
        assert nearest_cell(layer, 29.99, 1.9) is None
        assert nearest_cell(layer, 30.1, 2.01) is None


class TestZonePixelMask:
    def test_matches_shapely_oracle_on_random_zones(self):
        rng = np.random.default_rng(7)
        layer = make_layer(width=64, height=48)
        lons, lats = layer.center_lons(), layer.center_lats()
        for _ in range(20):
            cx = rng.uniform(30.0, 30.2)
            cy = rng.uniform(1.85, 2.0)
            theta = np.sort(rng.uniform(0, 2 * np.pi, 7))
            r = rng.uniform(0.01, 0.08, 7)
            ring = np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])
            ring = np.vstack([ring, ring[:1]])
            mask = zone_pixel_mask(layer, (ring,))
            poly = shapely.Polygon(ring)
            gx, gy = np.meshgrid(lons, lats)
            oracle = shapely.contains_xy(poly, gx.ravel(), gy.ravel()).reshape(mask.shape)
            np.testing.assert_array_equal(mask, oracle)

    def test_zone_with_hole(self):
        layer = make_layer(width=40, height=40, px=0.005)
        shell = rect_ring_deg(30.02, 1.82, 30.18, 1.98)
        hole = rect_ring_deg(30.08, 1.88, 30.12, 1.92)
        mask_full = zone_pixel_mask(layer, (shell,))
        mask_holed = zone_pixel_mask(layer, (shell, hole))
        hole_mask = zone_pixel_mask(layer, (hole,))
        np.testing.assert_array_equal(mask_holed, mask_full & ~hole_mask)
        assert hole_mask.sum() > 0

    def test_zone_outside_layer_empty(self):
        layer = make_layer()
        ring = rect_ring_deg(50.0, 50.0, 51.0, 51.0)
        assert zone_pixel_mask(layer, (ring,)).sum() == 0

    def test_mask_invariant_under_nodata_padding(self):
        layer = make_layer(width=10, height=10)
        ring = rect_ring_deg(30.02, 1.92, 30.07, 1.97)
        base = zone_pixel_mask(layer, (ring,))
        padded_values = np.full((14, 14), -1.0)
        padded_values[2:12, 2:12] = layer.values
        padded = GridLayer(
            layer.origin_lon - 2 * 0.01,
            layer.origin_lat + 2 * 0.01,
            0.01,
            0.01,
            padded_values,
            nodata=-1.0,
        )
        grown = zone_pixel_mask(padded, (ring,))
        np.testing.assert_array_equal(grown[2:12, 2:12], base)
        assert grown[:2].sum() == 0 and grown[:, :2].sum() == 0


class TestFileFormats:
    def test_geotiff_roundtrip(self, tmp_path):
        values = np.arange(12, dtype=np.float32).reshape(3, 4)
        layer = GridLayer(36.5, -1.25, 0.01, 0.02, values, nodata=-9999.0)
        path = tmp_path / "layer.tif"
        write_geotiff(path, layer)
        back = read_geotiff(path)
        assert back.origin_lon == pytest.approx(36.5)
        assert back.origin_lat == pytest.approx(-1.25)
        assert back.pixel_size_lon == pytest.approx(0.01)
        assert back.pixel_size_lat == pytest.approx(0.02)
        assert back.nodata == -9999.0
        np.testing.assert_array_equal(back.values, values)

    def test_geotiff_integer_nodata(self, tmp_path):
        values = np.array([[0, 1], [2, 255]], dtype=np.uint8)
        layer = GridLayer(0.0, 1.0, 0.5, 0.5, values, nodata=255)
        path = tmp_path / "classes.tif"
        write_geotiff(path, layer)
        back = read_geotiff(path, semantics="class-coded")
        assert back.nodata == 255
        assert isinstance(back.nodata, int)
        assert back.semantics == "class-coded"
        np.testing.assert_array_equal(back.values, values)

    def test_ascii_grid_roundtrip(self, tmp_path):
        values = np.array([[1.5, 2.5], [3.5, -9999.0]])
        layer = GridLayer(10.0, 20.0, 0.25, 0.25, values, nodata=-9999.0)
        path = tmp_path / "grid.asc"
        write_ascii_grid(path, layer)
        back = read_ascii_grid(path)
        assert back.origin_lon == pytest.approx(10.0)
        assert back.origin_lat == pytest.approx(20.0)
        np.testing.assert_array_equal(back.values, values)

    def test_read_layer_dispatch(self, tmp_path):
        layer = make_layer(width=3, height=2)
        write_geotiff(tmp_path / "a.tif", layer)
        write_ascii_grid(tmp_path / "a.asc", layer)
        assert read_layer(tmp_path / "a.tif").width == 3
        assert read_layer(tmp_path / "a.asc").width == 3
        with pytest.raises(ConfigError):
            read_layer(tmp_path / "a.xyz")

    def test_missing_georef_rejected(self, tmp_path):
        from PIL import Image

        Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(tmp_path / "plain.tif")
        with pytest.raises(ConfigError):
            read_geotiff(tmp_path / "plain.tif")
