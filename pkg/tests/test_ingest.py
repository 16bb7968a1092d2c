"""Parsing, query building, and the gated fetch."""

import http.server
import threading

import numpy as np
import pytest

from eventrisk import errors
from eventrisk.ingest import (
    EVENT_TYPES,
    FeatureTable,
    build_overpass_query,
    fetch_url_to_file,
    parse_events,
    parse_feature_table,
    parse_timestamp,
    write_feature_table,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseEvents:
    def test_three_wellformed_rows(self, tmp_path):
        path = write(
            tmp_path,
            "events.csv",
            "event_id,dispatch_time,event_type,lon,lat,region_id\n"
            "a,2016-01-04T10:00:00Z,FR,-113.5,53.5,\n"
            "b,2016-01-04T11:00:00Z,MD,,,R1\n"
            "c,2016-01-04T12:00:00Z,AL,-113.6,53.6,R2\n",
        )
        result = parse_events(path)
        assert not result.errors
        assert [r.event_type for r in result.records] == ["FR", "MD", "AL"]
        assert result.records[0].location == (-113.5, 53.5)
        assert result.records[1].region_id == "R1"

    def test_unknown_event_type_flags_line(self, tmp_path):
        path = write(
            tmp_path,
            "events.csv",
            "event_id,dispatch_time,event_type,lon,lat,region_id\n"
            "a,2016-01-04T10:00:00Z,ZZ,,,R1\n",
        )
        result = parse_events(path)
        assert not result.records
        assert result.errors[0].code == "unknown_event_type"
        assert result.errors[0].line == 2

    def test_invalid_calendar_date(self, tmp_path):
        path = write(
            tmp_path,
            "events.csv",
            "event_id,dispatch_time,event_type,lon,lat,region_id\n"
            "a,2016-02-30T10:00:00Z,FR,,,R1\n",
        )
        result = parse_events(path)
        assert result.errors[0].code == "malformed_timestamp"

    def test_missing_location_and_region(self, tmp_path):
        path = write(
            tmp_path,
            "events.csv",
            "event_id,dispatch_time,event_type,lon,lat,region_id\n"
            "a,2016-01-04T10:00:00Z,FR,,,\n",
        )
        result = parse_events(path)
        assert result.errors[0].code == "missing_location"

    def test_every_row_is_record_or_error(self, tmp_path):
        # totality: mixed garbage and good rows, counts must add up
        rows = [
            "a,2016-01-04T10:00:00Z,FR,,,R1",
            "b,not-a-time,MD,,,R1",
            "c,2016-01-04T10:00:00Z,QQ,,,R1",
            "d,2016-01-04T10:00:00Z,MD,999.0,53.5,",
            "e,2016-01-04T10:00:00Z,MD,-113.5,53.5,",
        ]
        path = write(
            tmp_path,
            "events.csv",
            "event_id,dispatch_time,event_type,lon,lat,region_id\n" + "\n".join(rows) + "\n",
        )
        result = parse_events(path)
        assert len(result.records) + len(result.errors) == len(rows)

    def test_naive_timestamp_uses_configured_zone(self):
        # 10:00 Edmonton winter time is 17:00 UTC
        dt = parse_timestamp("2016-01-04T10:00:00", "America/Edmonton")
        assert dt.hour == 17

    def test_extra_columns_ignored(self, tmp_path):
        path = write(
            tmp_path,
            "events.csv",
            "event_id,dispatch_time,event_type,lon,lat,region_id,bogus\n"
            "a,2016-01-04T10:00:00Z,FR,,,R1,junk\n",
        )
        result = parse_events(path)
        assert len(result.records) == 1


class TestFeatureTable:
    def test_zero_matrix(self, tmp_path):
        path = write(tmp_path, "f.csv", "region_id,a,b,c\nR1,0,0,0\nR2,0,0,0\n")
        table = parse_feature_table(path)
        assert table.values.shape == (2, 3)
        assert np.all(table.values == 0)

    def test_duplicate_region(self, tmp_path):
        path = write(tmp_path, "f.csv", "region_id,a\nR1,1\nR1,2\n")
        with pytest.raises(errors.DuplicateRegion):
            parse_feature_table(path)

    def test_negative_value_has_coordinates(self, tmp_path):
        path = write(tmp_path, "f.csv", "region_id,a,b\nR1,1,-4\n")
        with pytest.raises(errors.NegativeValue) as exc:
            parse_feature_table(path)
        assert exc.value.row == 2
        assert exc.value.col == 2

    def test_empty_table(self, tmp_path):
        path = write(tmp_path, "f.csv", "region_id,a\n")
        with pytest.raises(errors.EmptyTable):
            parse_feature_table(path)

    def test_missing_cell_rejected(self, tmp_path):
        path = write(tmp_path, "f.csv", "region_id,a,b\nR1,1,\n")
        with pytest.raises(errors.EmptyTable):
            parse_feature_table(path)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        table = FeatureTable(
            [f"R{i}" for i in range(5)],
            ["alpha", "beta", "gamma"],
            rng.uniform(0, 100, (5, 3)),
        )
        path = tmp_path / "out.csv"
        write_feature_table(table, path, metadata=["test artifact"])
        back = parse_feature_table(path)
        assert back.region_ids == table.region_ids
        assert back.feature_names == table.feature_names
        np.testing.assert_array_equal(back.values, table.values)

    def test_subset_reorders(self):
        table = FeatureTable(["R1"], ["a", "b", "c"], np.array([[1.0, 2.0, 3.0]]))
        sub = table.subset(["c", "a"])
        np.testing.assert_array_equal(sub.values, [[3.0, 1.0]])


class TestOverpassQuery:
    def test_food_has_all_six_subtags(self):
        q = build_overpass_query("Food")
        for tag in ("bar", "cafe", "fast_food", "food_court", "pub", "restaurant"):
            assert f'"amenity"="{tag}"' in q

    def test_healthcare_has_clinic_and_hospital(self):
        q = build_overpass_query("Healthcare")
        assert '"amenity"="clinic"' in q
        assert '"amenity"="hospital"' in q

    def test_unknown_category(self):
        with pytest.raises(errors.UnknownCategory):
            build_overpass_query("Gyms")

    def test_deterministic_output(self):
        assert build_overpass_query("Retail") == build_overpass_query("Retail")

    def test_bbox_embedded(self):
        q = build_overpass_query("bus_stops", bbox=(53.3, -113.8, 53.8, -113.2))
        assert "(53.3,-113.8,53.8,-113.2)" in q


class _Handler(http.server.BaseHTTPRequestHandler):
    def do_GET(self):
        if self.path == "/ok":
            body = b"0123456789"
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            self.send_error(404)

    def log_message(self, *args):
        pass


@pytest.fixture()
def http_server():
    server = http.server.HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


class TestFetch:
    def test_disabled_by_default(self, tmp_path):
        with pytest.raises(errors.NetworkDisabled):
            fetch_url_to_file("http://example.invalid/x", tmp_path / "out")

    def test_404(self, http_server, tmp_path):
        with pytest.raises(errors.HttpStatus) as exc:
            fetch_url_to_file(f"{http_server}/missing", tmp_path / "out", allow_network=True)
        assert exc.value.code == 404
        assert not (tmp_path / "out").exists()

    def test_200_writes_body(self, http_server, tmp_path):
        dest = tmp_path / "out.bin"
        n = fetch_url_to_file(f"{http_server}/ok", dest, allow_network=True)
        assert n == 10
        assert dest.read_bytes() == b"0123456789"


def test_event_type_enumeration_is_complete():
    assert len(EVENT_TYPES) == 12
    assert len(set(EVENT_TYPES)) == 12
