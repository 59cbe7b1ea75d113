"""Reading and writing dense CSV data, matrices and reports.

Series are one row per time point. Matrices are dense CSV blocks without a
header. Reports start with the resolved configuration as `# key=value` lines,
followed by `## name: value` metadata lines and the data block, so that the
header of any report can be passed back with `-c`.
"""

import csv
import json
from typing import IO, Any, Dict, Iterable, Mapping, Optional, Sequence, Union

import click
import numpy as np

from gilevel.core.utils import format_config_value
from gilevel.errors import DataError, ShapeError
from gilevel.stats.matrix import vech

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"

MatrixLike = Union[None, str, np.ndarray, Sequence[Sequence[float]], Sequence[float]]


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _parse_rows(path: str, allow_header: bool) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", newline="") as f:
        for line_number, fields in enumerate(csv.reader(f), start=1):
            fields = [x.strip() for x in fields]
            if not fields or all(x == "" for x in fields):
                continue
            if fields[0].startswith("#"):
                continue
            if width is None:
                width = len(fields)
                if not all(_is_number(x) for x in fields):
                    if allow_header and not rows:
                        continue
                    raise DataError(
                        f"{path}: line {line_number} is not numeric.", line=line_number
                    )
            elif len(fields) != width:
                raise DataError(
                    f"{path}: line {line_number} has {len(fields)} values, expected "
                    f"{width}.",
                    line=line_number,
                )
            row = []
            for col, text in enumerate(fields):
                try:
                    value = float(text)
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse '{text}' at row {len(rows)}, column "
                        f"{col} (line {line_number}).",
                        row=len(rows),
                        col=col,
                        line=line_number,
                    ) from None
                if not np.isfinite(value):
                    raise DataError(
                        f"{path}: non-finite value at row {len(rows)}, column {col} "
                        f"(line {line_number}).",
                        row=len(rows),
                        col=col,
                        line=line_number,
                    )
                row.append(value)
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows.")
    return np.array(rows, dtype=float)


def read_series(path: str) -> np.ndarray:
    """Read an N×p series. A first row that is not entirely numeric is taken to
    be a header and skipped."""
    return _parse_rows(path, allow_header=True)


def read_matrix(path: str) -> np.ndarray:
    return _parse_rows(path, allow_header=False)


def load_matrix(
    value: MatrixLike, name: str, shape: Optional[Sequence[int]] = None
) -> Optional[np.ndarray]:
    """Turn a matrix-valued field into an array.

    Paths are read as dense CSV blocks, scalars and nested sequences go through
    `np.asarray`.
    """
    if value is None:
        return None
    if isinstance(value, str):
        array = read_matrix(value)
        if shape is not None and len(shape) == 1:
            array = array.ravel()
    else:
        array = np.asarray(value, dtype=float)
    if shape is not None and array.shape != tuple(shape):
        raise ShapeError(
            f"'{name}' has shape {array.shape}, expected {tuple(shape)}."
        )
    return array


def write_array(stream: IO, array: np.ndarray, header: Optional[str] = None) -> None:
    array = np.atleast_2d(np.asarray(array, dtype=float))
    if header is not None:
        stream.write(header + "\n")
    np.savetxt(stream, array, fmt=FLOAT_FORMAT, delimiter=",")


def write_series(stream: IO, data: np.ndarray) -> None:
    write_array(stream, data)


def write_matrix(stream: IO, matrix: np.ndarray) -> None:
    write_array(stream, matrix)


def write_vech_rows(stream: IO, matrices: Iterable[np.ndarray]) -> None:
    """One row of lower-triangle, column-stacked entries per matrix."""
    rows = [vech(m) for m in matrices]
    if rows:
        write_array(stream, np.vstack(rows))


def open_output(path: Optional[str]):
    """A writable text stream for `path`; `None` or `-` is stdout."""
    return click.open_file(path or "-", "w")


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _format_meta(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    if isinstance(value, (np.ndarray, list, tuple)):
        return ",".join(_format_meta(v) for v in np.ravel(np.asarray(value, float)))
    return str(value)


def write_report(
    stream: IO,
    config: Mapping[str, Any],
    columns: Sequence[str],
    rows: Any,
    fmt: str = "csv",
    meta: Optional[Dict[str, Any]] = None,
) -> None:
    """Write a tabular report with its configuration echo.

    `rows` is a 2-D array (or a list of equal-length sequences) matching
    `columns`.
    """
    meta = dict(meta or {})
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        rows = rows.reshape(0, len(columns))
    if rows.ndim != 2 or rows.shape[1] != len(columns):
        raise ShapeError(
            f"Report has {len(columns)} columns but rows of shape {rows.shape}."
        )

    if fmt == "json":
        json.dump(
            {
                "schema_version": SCHEMA_VERSION,
                "config": _jsonable(dict(config)),
                "meta": _jsonable(meta),
                "columns": list(columns),
                "rows": rows.tolist(),
            },
            stream,
            indent=2,
        )
        stream.write("\n")
        return
    if fmt != "csv":
        raise ValueError(f"Unknown report format '{fmt}'; use 'csv' or 'json'.")

    for key, value in config.items():
        stream.write(f"# {key}={format_config_value(value)}\n")
    stream.write(f"## schema_version: {SCHEMA_VERSION}\n")
    for key, value in meta.items():
        stream.write(f"## {key}: {_format_meta(value)}\n")
    stream.write(",".join(columns) + "\n")
    if len(rows):
        np.savetxt(stream, rows, fmt=FLOAT_FORMAT, delimiter=",")
