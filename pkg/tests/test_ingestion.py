from datetime import date, datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadpatch.errors import (DatasetReadError, EmptyDatasetError, EmptySeriesError, OrderingError,
                              ParseError)
from loadpatch.ingestion import (DailyProfile, align_and_segment, ingest_load_csv,
                                 ingest_temperature_csv, read_days, summarize, write_days)

T0 = datetime(2018, 7, 1)


def write_csv(path, rows, header="timestamp,value"):
    lines = [header] if header else []
    lines += [f"{ts.isoformat() if isinstance(ts, datetime) else ts},{v}" for ts, v in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def quarter_hours(n, start=T0):
    return [start + timedelta(minutes=15 * i) for i in range(n)]


def hours(n, start=T0):
    return [start + timedelta(hours=i) for i in range(n)]


def test_one_well_formed_day(tmp_path):
    path = write_csv(tmp_path / "m.csv", [(t, 500 + i) for i, t in enumerate(quarter_hours(96))])
    series = ingest_load_csv(path, "user0")
    assert len(series) == 96
    assert series.values[5] == 505
    assert series.source_id == "user0"


def test_header_is_optional(tmp_path):
    path = write_csv(tmp_path / "m.csv", [(t, 1) for t in quarter_hours(4)], header=None)
    assert len(ingest_load_csv(path, "u")) == 4


def test_duplicate_timestamp(tmp_path):
    ts = quarter_hours(3)
    path = write_csv(tmp_path / "m.csv", [(ts[0], 1), (ts[1], 2), (ts[1], 3)])
    with pytest.raises(OrderingError, match="line 4"):
        ingest_load_csv(path, "u")


def test_out_of_order_temperature(tmp_path):
    ts = hours(3)
    path = write_csv(tmp_path / "t.csv", [(ts[0], 70), (ts[2], 71), (ts[1], 72)])
    with pytest.raises(OrderingError):
        ingest_temperature_csv(path)


def test_empty_file(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("")
    with pytest.raises(EmptySeriesError):
        ingest_load_csv(path, "u")


def test_header_only_is_empty(tmp_path):
    path = write_csv(tmp_path / "m.csv", [])
    with pytest.raises(EmptySeriesError):
        ingest_load_csv(path, "u")


def test_24_hourly_readings(tmp_path):
    path = write_csv(tmp_path / "t.csv", [(t, 70 + i) for i, t in enumerate(hours(24))])
    assert len(ingest_temperature_csv(path)) == 24


def test_missing_value_names_row(tmp_path):
    ts = hours(3)
    path = write_csv(tmp_path / "t.csv", [(ts[0], 70), (ts[1], ""), (ts[2], 72)])
    with pytest.raises(ParseError) as info:
        ingest_temperature_csv(path)
    assert info.value.line == 3
    assert "line 3" in str(info.value)


@pytest.mark.parametrize("bad", ["abc", "nan", "inf"])
def test_bad_values(tmp_path, bad):
    path = write_csv(tmp_path / "m.csv", [(T0, bad)])
    with pytest.raises(ParseError):
        ingest_load_csv(path, "u")


def test_bad_timestamp_after_first_line(tmp_path):
    path = write_csv(tmp_path / "m.csv", [(T0, 1), ("yesterday", 2)])
    with pytest.raises(ParseError, match="line 3"):
        ingest_load_csv(path, "u")


def test_negative_load_rejected(tmp_path):
    path = write_csv(tmp_path / "m.csv", [(T0, -3)])
    with pytest.raises(ParseError, match="negative"):
        ingest_load_csv(path, "u")


def test_utc_suffix(tmp_path):
    path = write_csv(tmp_path / "m.csv", [("2018-07-01T04:00:00Z", 1)], header=None)
    series = ingest_load_csv(path, "u", tz="America/New_York")
    assert series.timestamps[0].hour == 0


def series_pair(tmp_path, loads, temps, t_start=T0):
    load = ingest_load_csv(write_csv(tmp_path / "m.csv", loads), "user0")
    temp = ingest_temperature_csv(write_csv(tmp_path / "t.csv", temps))
    return load, temp


def test_temperature_interpolates_between_bracketing_hours(tmp_path):
    loads = [(t, 500) for t in quarter_hours(96)]
    temps = [(t, 70 + 4 * (i % 2)) for i, t in enumerate(hours(25))]
    (day,) = align_and_segment(*series_pair(tmp_path, loads, temps))
    # 00:15 sits a quarter of the way from 70 (00:00) to 74 (01:00)
    assert day.temperature[1] == pytest.approx(71.0)
    assert day.temperature[2] == pytest.approx(72.0)
    assert day.temperature[4] == pytest.approx(74.0)
    assert day.temperature[7] == pytest.approx(71.0)


def test_temperature_held_flat_past_last_reading(tmp_path):
    loads = [(t, 500) for t in quarter_hours(96)]
    temps = [(t, 60 + i) for i, t in enumerate(hours(12))]
    (day,) = align_and_segment(*series_pair(tmp_path, loads, temps))
    assert day.temperature[-1] == 71


def test_constant_temperature(tmp_path):
    loads = [(t, 500) for t in quarter_hours(96)]
    temps = [(t, 70) for t in hours(25)]
    (day,) = align_and_segment(*series_pair(tmp_path, loads, temps))
    assert set(day.temperature) == {70.0}


def test_day_with_95_points_is_dropped(tmp_path):
    ts = quarter_hours(192)
    del ts[100]
    loads = [(t, 500) for t in ts]
    temps = [(t, 70) for t in hours(49)]
    out = align_and_segment(*series_pair(tmp_path, loads, temps))
    assert [d.date for d in out] == [date(2018, 7, 1)]


def test_off_grid_reading_drops_the_day(tmp_path):
    ts = quarter_hours(96) + [T0 + timedelta(days=1, minutes=7)] + quarter_hours(96, T0 + timedelta(days=1, minutes=15))
    ts = sorted(ts)
    loads = [(t, 500) for t in ts]
    temps = [(t, 70) for t in hours(49)]
    out = align_and_segment(*series_pair(tmp_path, loads, temps))
    assert [d.date for d in out] == [date(2018, 7, 1)]


def test_no_complete_days(tmp_path):
    loads = [(t, 500) for t in quarter_hours(50)]
    temps = [(t, 70) for t in hours(24)]
    with pytest.raises(EmptyDatasetError):
        align_and_segment(*series_pair(tmp_path, loads, temps))


def test_dst_day_is_dropped(tmp_path):
    # 2018-11-04 has 25 local hours in New York; the repeated hour collides.
    start = datetime(2018, 11, 4, 4)  # local midnight in UTC
    utc = [start + timedelta(minutes=15 * i) for i in range(100)]
    rows = [(t.isoformat() + "Z", 500) for t in utc]
    path = write_csv(tmp_path / "m.csv", rows)
    load = ingest_load_csv(path, "u", tz="America/New_York")
    temp_rows = [((start + timedelta(hours=i)).isoformat() + "Z", 50) for i in range(26)]
    temp = ingest_temperature_csv(write_csv(tmp_path / "t.csv", temp_rows), tz="America/New_York")
    with pytest.raises(EmptyDatasetError):
        align_and_segment(load, temp)


def flat_day(value=500.0, user="u", day=date(2018, 7, 1), temp=70.0):
    return DailyProfile(user, day, (value,) * 96, (temp,) * 96)


def test_summarize_constant_load():
    stats = summarize([flat_day(500)])
    assert stats.load_min == stats.load_max == 500


def test_summarize_fleet_range():
    a = list(flat_day(600).load)
    a[3] = 210
    b = list(flat_day(600).load)
    b[90] = 1751
    days = [DailyProfile("u", date(2018, 7, 1), tuple(a), (70.0,) * 96),
            DailyProfile("v", date(2018, 7, 1), tuple(b), (70.0,) * 96)]
    stats = summarize(days)
    assert (stats.load_min, stats.load_max) == (210, 1751)
    assert stats.n_users == 2


def test_daily_peak():
    load = [500.0] * 96
    load[50] = 900.0
    day = DailyProfile("u", date(2018, 7, 1), tuple(load), (70.0,) * 96)
    assert summarize([day]).daily_peaks == (900.0,)
    assert day.peak_load == 900.0


def test_summarize_empty():
    with pytest.raises(EmptyDatasetError):
        summarize([])


def test_profile_invariants():
    with pytest.raises(ValueError):
        DailyProfile("u", date(2018, 7, 1), (1.0,) * 95, (70.0,) * 96)
    with pytest.raises(ValueError):
        DailyProfile("u", date(2018, 7, 1), (-1.0,) * 96, (70.0,) * 96)


def test_days_file_round_trip(tmp_path):
    days = [flat_day(500.5), flat_day(610.25, "v", date(2018, 7, 2), 71.5)]
    write_days(days, tmp_path / "d.jsonl")
    assert read_days(tmp_path / "d.jsonl") == days


def test_days_file_bad_record(tmp_path):
    path = tmp_path / "d.jsonl"
    write_days([flat_day()], path)
    path.write_text(path.read_text() + '{"user_id": "x"}\n')
    with pytest.raises(DatasetReadError, match="line 3"):
        read_days(path)


def test_synthetic_fixture_shape(days):
    # one reading of user3 is removed, so exactly one day is dropped
    assert len(days) == 11 * 92 - 1
    assert all(len(d.load) == 96 for d in days)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 2000, allow_nan=False), min_size=96 * 2, max_size=96 * 2),
       st.lists(st.floats(50, 110, allow_nan=False), min_size=49, max_size=49))
def test_segmentation_is_deterministic_and_exact_at_knots(tmp_path_factory, loads, temps):
    tmp = tmp_path_factory.mktemp("seg")
    load = ingest_load_csv(write_csv(tmp / "m.csv", list(zip(quarter_hours(192), loads))), "u")
    temp = ingest_temperature_csv(write_csv(tmp / "t.csv", list(zip(hours(49), temps))))
    first = align_and_segment(load, temp)
    assert first == align_and_segment(load, temp)
    assert [len(d.load) for d in first] == [96, 96]
    for k, day in enumerate(first):
        for h in range(24):
            assert day.temperature[4 * h] == pytest.approx(temps[24 * k + h])
