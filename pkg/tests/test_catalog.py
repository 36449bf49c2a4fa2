import json
from datetime import date

import numpy as np
import pytest

from ldis.catalog import (
    FilterDecision,
    SiteRecord,
    filter_afforestation,
    ingest_catalog,
    normalize_area_km2,
    parse_date_guess,
    resolve_planting_date,
)
from ldis.errors import DuplicateSiteIdError

from conftest import square_ring_km


def write_catalog(tmp_path, features, name="sites.geojson"):
    path = tmp_path / name
    path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    return path


def polygon_feature(site_id, ring, **props):
    return {
        "type": "Feature",
        "properties": {"site_id": site_id, **props},
        "geometry": {"type": "Polygon", "coordinates": [ring.tolist()]},
    }


class TestDates:
    def test_iso_and_year_forms(self):
        assert parse_date_guess("2015-03-01") == date(2015, 3, 1)
        assert parse_date_guess("2015") == date(2015, 1, 1)
        assert parse_date_guess(2015) == date(2015, 1, 1)
        assert parse_date_guess("01.03.2015") == date(2015, 3, 1)
        assert parse_date_guess("not a date") is None
        assert parse_date_guess("") is None

    def test_precedence(self):
        d, t = resolve_planting_date(
            {"planting_date": "2016-05-01", "registration_date": "2010-01-01"}
        )
        assert (d, t) == (date(2016, 5, 1), "planting")
        d, t = resolve_planting_date(
            {"intervention_year": 2014, "registration_date": "2010-01-01"}
        )
        assert (d, t) == (date(2014, 1, 1), "intervention_year")
        d, t = resolve_planting_date({"crediting_start": "2012-07-01"})
        assert (d, t) == (date(2012, 7, 1), "crediting_start")
        d, t = resolve_planting_date({"registration_date": "2010-01-01"})
        assert (d, t) == (date(2010, 1, 1), "registration")

    def test_unparseable_yields_unknown(self):
        d, t = resolve_planting_date({"planting_date": "spring, probably"})
        assert d is None and t == "unknown"

    def test_declared_type_respected(self):
        d, t = resolve_planting_date(
            {"planting_date": "2010-01-01", "planting_date_type": "registration"}
        )
        assert t == "registration"


class TestAreaNormalization:
    def test_hectares_converted(self):
        assert normalize_area_km2({"area_ha": 250}) == pytest.approx(2.5)
        assert normalize_area_km2({"area": "250 ha"}) == pytest.approx(2.5)
        assert normalize_area_km2({"area": "250", "area_unit": "hectares"}) == pytest.approx(2.5)

    def test_km2_passthrough(self):
        assert normalize_area_km2({"area_km2": 3.2}) == pytest.approx(3.2)
        assert normalize_area_km2({"area": "3.2 km2"}) == pytest.approx(3.2)

    def test_absent(self):
        assert normalize_area_km2({}) is None
        assert normalize_area_km2({"area": "n/a"}) is None


class TestIngest:
    def test_two_features(self, tmp_path):
        ring = square_ring_km(0, 0, 0.5)
        path = write_catalog(
            tmp_path,
            [polygon_feature("B", ring), polygon_feature("A", ring + 0.5)],
        )
        records = ingest_catalog(path)
        assert [r.site_id for r in records] == ["A", "B"]  # sorted
        assert all(r.area_km2 == pytest.approx(1.0, rel=1e-3) for r in records)

    def test_point_buffered(self, tmp_path):
        path = write_catalog(
            tmp_path,
            [
                {
                    "type": "Feature",
                    "properties": {"site_id": "P1"},
                    "geometry": {"type": "Point", "coordinates": [36.8, -1.3]},
                }
            ],
        )
        (rec,) = ingest_catalog(path, point_buffer_m=100.0)
        assert rec.geometry.is_point_origin
        assert rec.area_km2 == pytest.approx(np.pi * 0.01, rel=5e-3)

    def test_multipolygon_split_with_suffixes(self, tmp_path):
        rings = [square_ring_km(i * 5.0, 0, 0.5) for i in range(3)]
        feature = {
            "type": "Feature",
            "properties": {"site_id": "M1", "project_id": "P9"},
            "geometry": {
                "type": "MultiPolygon",
                "coordinates": [[r.tolist()] for r in rings],
            },
        }
        records = ingest_catalog(write_catalog(tmp_path, [feature]))
        assert [r.site_id for r in records] == ["M1#1", "M1#2", "M1#3"]
        assert all(r.parent_site_id == "M1" for r in records)
        assert all(r.project_id == "P9" for r in records)

    def test_duplicate_ids_hard_error(self, tmp_path):
        ring = square_ring_km(0, 0, 0.5)
        path = write_catalog(
            tmp_path, [polygon_feature("X", ring), polygon_feature("X", ring + 2)]
        )
        with pytest.raises(DuplicateSiteIdError) as err:
            ingest_catalog(path)
        assert "X" in str(err.value)

    def test_csv_metadata_join(self, tmp_path):
        ring = square_ring_km(0, 0, 0.5)
        path = write_catalog(tmp_path, [polygon_feature("S1", ring)])
        meta = tmp_path / "meta.csv"
        meta.write_text("site_id,trees_planted,host_name\nS1,4200,treehost\n")
        (rec,) = ingest_catalog(path, metadata_csv=meta)
        assert rec.reported["trees_planted"] == "4200"
        assert rec.host_name == "treehost"

    def test_harmonized_fields(self, tmp_path):
        ring = square_ring_km(0, 0, 0.5)
        feature = polygon_feature(
            "S1",
            ring,
            project_id="P1",
            iso3="KEN",
            planting_date="2015-06-01",
            area_ha="120",
            url="https://example.org/p1",
        )
        (rec,) = ingest_catalog(write_catalog(tmp_path, [feature]))
        assert rec.iso3 == "KEN"
        assert rec.planting_date == date(2015, 6, 1)
        assert rec.planting_date_type == "planting"
        assert rec.planting_year == 2015
        assert rec.reported["area_km2"] == pytest.approx(1.2)
        # raw reported fields are preserved verbatim
        assert rec.reported["area_ha"] == "120"

    def test_unparseable_date_kept_with_unknown_type(self, tmp_path):
        ring = square_ring_km(0, 0, 0.5)
        feature = polygon_feature("S1", ring, planting_date="unclear")
        (rec,) = ingest_catalog(write_catalog(tmp_path, [feature]))
        assert rec.planting_date is None
        assert rec.planting_date_type == "unknown"


class TestFilter:
    def record(self, **props):
        from ldis.geometry import SiteGeometry

        ring = square_ring_km(0, 0, 0.5)
        geom = SiteGeometry(kind="polygon", reported_rings=(ring,), parts=(1,))
        return SiteRecord(site_id="S1", geometry=geom, reported=props)

    def test_keyword_keep(self):
        d = filter_afforestation(self.record(name="Community reforestation, Kenya"))
        assert d.keep
        assert d.rule == "keyword:reforestation"

    def test_unrelated_drop(self):
        d = filter_afforestation(self.record(name="Improved cookstoves phase 2"))
        assert not d.keep
        assert d.rule == "no-match"
        assert d.reason

    def test_classification_precedence(self):
        d = filter_afforestation(
            self.record(classification="ARR", name="Improved cookstoves phase 2")
        )
        assert d.keep
        assert d.rule == "classification"

    def test_description_keyword(self):
        d = filter_afforestation(self.record(description="large scale tree planting effort"))
        assert d.keep
        assert d.rule == "keyword:tree planting"

    def test_case_insensitive(self):
        assert filter_afforestation(self.record(name="REFORESTATION drive")).keep
