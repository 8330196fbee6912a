import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyradial import profile_io
from polyradial.kinematics import RadialProfile, graded_mesh
from polyradial.penalty import PenaltySpec
from polyradial.profile_io import (PROFILE_COLUMNS, CsvFormatError, atomic_write, format_float,
                                   read_profile_csv, write_json, write_profile_csv, write_rows_csv)

GENERIC = PenaltySpec.smooth_step(5.0, 0.5)


def sample_profile(M=2):
    mesh = graded_mesh(64, 1e-4, 1.08, origin=True)
    r = 0.7 * mesh**M + 0.3 * mesh ** (M + 1)
    rd = 0.7 * M * mesh ** (M - 1) + 0.3 * (M + 1) * mesh**M
    return RadialProfile(M, mesh, r, rd)


@settings(max_examples=300, deadline=None)
@given(st.floats(allow_nan=False))
def test_format_float_round_trips(x):
    assert float(format_float(x)) == x
    assert math.copysign(1, float(format_float(x))) == math.copysign(1, x)


def test_format_float_special_values():
    assert format_float(math.nan) == "nan"
    assert format_float(math.inf) == "inf"
    assert format_float(-math.inf) == "-inf"
    assert format_float(None) == ""
    assert format_float(np.float64(0.1)) == "0.1"


def test_profile_round_trip_is_bit_exact(tmp_path):
    p = sample_profile()
    path = tmp_path / "p.csv"
    write_profile_csv(path, GENERIC, p)
    table = read_profile_csv(path)
    assert list(table.columns) == list(PROFILE_COLUMNS)
    for name, col in (("R", p.mesh), ("r", p.r), ("rdot", p.rdot)):
        assert np.array_equal(table[name], col)
    back = table.to_profile(2)
    assert np.array_equal(back.det()[1:], p.det()[1:])


def test_origin_row_holds_limits(tmp_path):
    path = tmp_path / "p.csv"
    write_profile_csv(path, GENERIC, sample_profile())
    table = read_profile_csv(path)
    assert table["R"][0] == 0.0
    assert np.isfinite(table["d"][0]) and abs(table["d"][0]) < 1e-6
    assert np.isfinite(table["z"][0])


def test_diagnostic_columns_are_appended(tmp_path):
    p = sample_profile()
    diag = {"residual": np.full(p.mesh.size, np.nan), "zdot": np.arange(p.mesh.size, dtype=float)}
    text = write_profile_csv(None, GENERIC, p, diag)
    header = text.splitlines()[0].split(",")
    assert header == list(PROFILE_COLUMNS) + ["residual", "zdot"]
    assert text.splitlines()[1].split(",")[5] == "nan"


def test_stdout_target_returns_text():
    text = write_rows_csv("-", ["a", "b"], [["1", "2"]])
    assert text == "a,b\n1,2\n"


@pytest.mark.parametrize("body,message", [
    ("", "empty file"),
    ("R,r,rdot,d\n0.5,0.25,1,1\n", "missing column(s) z"),
    ("R,r,rdot,d,z\n0.5,0.25,1,1,1\n1,1,2,2\n", ":3: expected 5 fields, found 4"),
    ("R,r,rdot,d,z\n0.5,0.25,1,1,1\n1,one,2,2,2\n", ":3: column 'r' is not a number: 'one'"),
    ("R,r,rdot,d,z\n0.5,0.25,1,1,1\n", "need at least two rows"),
])
def test_malformed_csv_errors(tmp_path, body, message):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(CsvFormatError) as info:
        read_profile_csv(path)
    assert message in str(info.value)


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "ok.csv"
    path.write_text("R,r,rdot,d,z\n0.5,0.25,1,1,1\n\n1,1,2,2,2\n")
    assert read_profile_csv(path)["R"].tolist() == [0.5, 1.0]


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    path = tmp_path / "out.txt"
    path.write_text("old")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(profile_io.os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write(path, "new")
    assert path.read_text() == "old"
    assert os.listdir(tmp_path) == ["out.txt"]


def test_json_nonfinite_becomes_null(tmp_path):
    doc = {"a": np.float64(1.5), "b": math.nan, "c": [math.inf, np.int64(3)], "d": np.bool_(True),
           "e": {"f": -math.inf}}
    text = write_json(None, doc)
    assert json.loads(text) == {"a": 1.5, "b": None, "c": [None, 3], "d": True, "e": {"f": None}}
    path = tmp_path / "r.json"
    write_json(path, doc)
    assert path.read_text() == text
