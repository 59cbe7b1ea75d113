import io
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gilevel.core.io import (
    load_matrix,
    read_matrix,
    read_series,
    write_report,
    write_series,
    write_vech_rows,
)
from gilevel.core.utils import read_config_file
from gilevel.errors import DataError, ShapeError


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_read_series_with_header_and_comments(tmp_path):
    path = write(tmp_path, "y1,y2\n# a comment\n1,2\n\n3.5, -4e-1\n")
    assert_allclose(read_series(path), [[1.0, 2.0], [3.5, -0.4]])


def test_read_series_round_trip(tmp_path):
    data = np.random.default_rng(0).standard_normal((5, 3))
    stream = io.StringIO()
    write_series(stream, data)
    path = write(tmp_path, stream.getvalue())
    assert np.array_equal(read_series(path), data)


def test_matrices_have_no_header(tmp_path):
    path = write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(DataError) as info:
        read_matrix(path)
    assert info.value.line == 1


@pytest.mark.parametrize(
    "text,row,col,line",
    [
        ("1,2\n3,x\n", 1, 1, 2),
        ("1,2\nnan,4\n", 1, 0, 2),
        ("1,2\n3,inf\n", 1, 1, 2),
    ],
)
def test_bad_values_are_located(tmp_path, text, row, col, line):
    with pytest.raises(DataError) as info:
        read_series(write(tmp_path, text))
    assert (info.value.row, info.value.col, info.value.line) == (row, col, line)


def test_ragged_rows(tmp_path):
    with pytest.raises(DataError, match="has 3 values, expected 2"):
        read_series(write(tmp_path, "1,2\n3,4,5\n"))


def test_empty_file(tmp_path):
    with pytest.raises(DataError, match="no data rows"):
        read_series(write(tmp_path, "y1,y2\n"))


def test_load_matrix(tmp_path):
    path = write(tmp_path, "1,0.5\n0.5,2\n", name="W.csv")
    assert load_matrix(None, "W") is None
    assert_allclose(load_matrix(path, "W", shape=(2, 2)), [[1, 0.5], [0.5, 2]])
    assert_allclose(load_matrix([[1, 0], [0, 1]], "W"), np.eye(2))
    vector = write(tmp_path, "1\n2\n3\n", name="m0.csv")
    assert load_matrix(vector, "m0", shape=(3,)).shape == (3,)
    with pytest.raises(ShapeError, match="'W' has shape"):
        load_matrix(np.eye(3), "W", shape=(2, 2))


def test_vech_rows():
    stream = io.StringIO()
    write_vech_rows(stream, [np.array([[1.0, 2.0], [2.0, 3.0]])])
    assert stream.getvalue() == "1,2,3\n"


def test_csv_report_header_is_a_config_file(tmp_path):
    stream = io.StringIO()
    config = {"phi": 0.9, "w_spec": "DiscountW", "w_spec.deltas": (0.9, 0.95)}
    write_report(
        stream,
        config,
        ["t", "e1"],
        [[1, 0.5], [2, -0.25]],
        meta={"msse": np.array([1.0, 0.5]), "missing": 0},
    )
    text = stream.getvalue()
    lines = text.splitlines()
    assert lines[0] == "# phi=0.9"
    assert "## schema_version: 1" in lines
    assert "## msse: 1,0.5" in lines
    assert "## missing: 0" in lines
    assert lines[-3:] == ["t,e1", "1,0.5", "2,-0.25"]
    assert read_config_file(write(tmp_path, text, name="report.csv")) == config


def test_json_report():
    stream = io.StringIO()
    write_report(
        stream,
        {"seed": 3},
        ["t", "H"],
        np.array([[1.0, 0.1]]),
        fmt="json",
        meta={"W": np.eye(2)},
    )
    report = json.loads(stream.getvalue())
    assert report["schema_version"] == 1
    assert report["config"] == {"seed": 3}
    assert report["meta"]["W"] == [[1.0, 0.0], [0.0, 1.0]]
    assert report["rows"] == [[1.0, 0.1]]


def test_report_validation():
    with pytest.raises(ShapeError):
        write_report(io.StringIO(), {}, ["a", "b"], [[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError, match="Unknown report format"):
        write_report(io.StringIO(), {}, ["a"], [[1.0]], fmt="xml")
    stream = io.StringIO()
    write_report(stream, {}, ["a"], [])
    assert stream.getvalue().splitlines()[-1] == "a"
