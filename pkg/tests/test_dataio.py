import datetime as dt
import json
import math

import numpy as np
import pytest

from seirda.assimilator import assimilate
from seirda.dataio import (
    ANALYSIS_HEADER,
    ObservationSeries,
    metadata_path,
    parse_observations,
    read_analysis,
    write_analysis,
    write_observations,
    write_table,
)
from seirda.config import RunConfig
from seirda.errors import DataError, ObservationFormatError

from .helpers import make_series


def write(tmp_path, text, name="obs.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


GOOD = "date,hospitalized,recovered,deaths\n2020-03-06,10,2,0\n2020-03-07,12,3,1\n2020-03-08,15,5,1\n"


def test_three_rows(tmp_path):
    s = parse_observations(write(tmp_path, GOOD), "tokyo")
    assert len(s) == 3
    assert s.start_date == dt.date(2020, 3, 6)
    assert s.region == "tokyo"
    np.testing.assert_array_equal(s.H, [10, 12, 15])
    assert s.new_cases is None


def test_region_defaults_to_stem(tmp_path):
    assert parse_observations(write(tmp_path, GOOD, "osaka.csv")).region == "osaka"


def test_new_cases_column(tmp_path):
    text = "date,hospitalized,recovered,deaths,new_cases\n2020-03-06,10,2,0,4\n2020-03-07,12,3,1,\n"
    s = parse_observations(write(tmp_path, text))
    assert s.new_cases[0] == 4 and math.isnan(s.new_cases[1])


@pytest.mark.parametrize("body,line,fragment", [
    ("2020-03-06,10,2,0\n2020-03-05,12,3,1\n", 3, "regression"),
    ("2020-03-06,10,2,0\n2020-03-06,12,3,1\n", 3, "duplicate"),
    ("2020-03-06,10,2\n", 2, "expected 4 fields"),
    ("2020-13-06,10,2,0\n", 2, "bad date"),
    ("2020-03-06,ten,2,0\n", 2, "not a number"),
    ("2020-03-06,-1,2,0\n", 2, "nonnegative"),
])
def test_malformed_rows_name_line(tmp_path, body, line, fragment):
    p = write(tmp_path, "date,hospitalized,recovered,deaths\n" + body)
    with pytest.raises(ObservationFormatError, match=fragment) as err:
        parse_observations(p)
    assert err.value.line == line
    assert f":{line}:" in str(err.value)


def test_bad_header(tmp_path):
    with pytest.raises(ObservationFormatError, match="header"):
        parse_observations(write(tmp_path, "day,H,R,D\n2020-03-06,1,1,1\n"))


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="nope.csv"):
        parse_observations(tmp_path / "nope.csv")


def test_gaps_become_missing(tmp_path, caplog):
    text = "date,hospitalized,recovered,deaths\n2020-03-06,10,2,0\n2020-03-09,12,3,1\n"
    s = parse_observations(write(tmp_path, text))
    assert len(s) == 4
    assert s.missing == (dt.date(2020, 3, 7), dt.date(2020, 3, 8))
    assert "absent" in caplog.text


def test_cumulative_cleanup(tmp_path, caplog):
    text = ("date,hospitalized,recovered,deaths\n2020-03-06,10,5,2\n2020-03-07,10,4,2\n"
            "2020-03-08,10,6,1\n")
    s = parse_observations(write(tmp_path, text))
    np.testing.assert_array_equal(s.R, [5, 5, 6])
    np.testing.assert_array_equal(s.D, [2, 2, 2])
    assert [(c.column, c.raw, c.corrected) for c in s.corrections] == [
        ("recovered", 4.0, 5.0), ("deaths", 1.0, 2.0)]
    assert "decreased" in caplog.text
    assert np.all(np.diff(s.R) >= 0) and np.all(np.diff(s.D) >= 0)


def test_observation_round_trip(tmp_path, toy_series):
    p = tmp_path / "a.csv"
    write_observations(toy_series, p)
    once = parse_observations(p, "toy")
    write_observations(once, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    np.testing.assert_array_equal(once.H, toy_series.H)


def test_series_validation():
    d = (dt.date(2020, 1, 1), dt.date(2020, 1, 3))
    with pytest.raises(DataError):
        ObservationSeries("x", d, [1, 1], [1, 1], [1, 1])
    with pytest.raises(DataError):
        ObservationSeries("x", d[:1], [1, 2], [1], [1])


def test_window(toy_series):
    w = toy_series.window(toy_series.dates[3], toy_series.dates[5])
    assert len(w) == 3 and w.H[0] == toy_series.H[3]
    with pytest.raises(DataError):
        toy_series.window(dt.date(2019, 1, 1))


@pytest.fixture(scope="module")
def records():
    return assimilate(RunConfig(population=13_955_000, ensemble_size=10), make_series(8))


def test_analysis_schema(tmp_path, records):
    p = tmp_path / "analysis.csv"
    write_analysis(records[:1], p, {"seed": 3})
    lines = p.read_text().splitlines()
    assert len(lines) == 2
    assert len(ANALYSIS_HEADER) == 1 + 10 * 6 == len(lines[0].split(","))
    meta = json.loads(metadata_path(p).read_text())
    assert meta["seed"] == 3 and meta["columns"] == list(ANALYSIS_HEADER)


def test_analysis_round_trip(tmp_path, records):
    p = tmp_path / "analysis.csv"
    write_analysis(records, p)
    dates, cols = read_analysis(p)
    assert dates == [r.date for r in records]
    for r, i in zip(records, range(len(records))):
        for q, summary in r.summaries.items():
            for stat in summary._fields:
                assert cols[f"{q}_{stat}"][i] == pytest.approx(getattr(summary, stat), rel=1e-9)


def test_analysis_empty(tmp_path):
    with pytest.raises(DataError):
        write_analysis([], tmp_path / "x.csv")


def test_write_errors_name_path(tmp_path, records):
    target = tmp_path / "missing_dir" / "analysis.csv"
    with pytest.raises(DataError, match="missing_dir"):
        write_analysis(records, target)


def test_table_missing_marker(tmp_path):
    p = tmp_path / "t.csv"
    write_table(p, ["date", "x"], [(dt.date(2020, 1, 1), math.nan), (dt.date(2020, 1, 2), 0.5)])
    assert p.read_text() == "date,x\n2020-01-01,NA\n2020-01-02,0.5\n"
