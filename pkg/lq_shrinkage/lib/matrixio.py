"""Matrix, vector, CSV and JSON file formats.

Matrices are read from
  - `.csv`: first line `rows,cols`, then one comma separated row per line
  - `.bin`: ASCII header `rows cols\\n` then little-endian float64, row-major
  - `.json`: a list of rows (or a flat list for a vector)
Floats are always written with 17 significant digits, non-finite as null,
so equal inputs give byte-identical files.
"""

import csv
import json
import math
import pathlib

import numpy as np

from lq_shrinkage.config import FLOAT_FORMAT
from lq_shrinkage.errors import DimensionError, ProblemFileError

MATRIX_SUFFIXES = (".csv", ".bin", ".json")


def format_float(value) -> str:
    value = float(value)
    if not math.isfinite(value):
        return ""
    return format(value, FLOAT_FORMAT)


def _scalar(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value) or "null"
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _is_flat(items) -> bool:
    return all(not isinstance(i, (dict, list, tuple, np.ndarray)) for i in items)


def _dump(value, level: int, indent: int) -> str:
    pad, inner = " " * (indent * level), " " * (indent * (level + 1))
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_dump(v, level + 1, indent)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if _is_flat(value):
            return "[" + ", ".join(_scalar(i) for i in value) + "]"
        items = [f"{inner}{_dump(i, level + 1, indent)}" for i in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    return _scalar(value)


def dumps_json(value, indent: int = 2) -> str:
    """Deterministic JSON text; flat arrays stay on one line."""
    return _dump(value, 0, indent) + "\n"


def write_json(path, value) -> pathlib.Path:
    path = pathlib.Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(dumps_json(value))
    except OSError as e:
        raise ProblemFileError(f"cannot write {path}: {e}") from e
    return path


def read_json(path):
    path = pathlib.Path(path)
    if not path.is_file():
        raise ProblemFileError(f"file {path} does not exist")
    try:
        with open(path, "r") as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        raise ProblemFileError(f"cannot read {path}: {e}") from e


def write_csv(path, header, rows) -> pathlib.Path:
    """CSV with a header line, floats at 17 significant digits."""
    path = pathlib.Path(path)

    def cell(value):
        if isinstance(value, (bool, np.bool_)):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            return format_float(value)
        return value

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows([cell(i) for i in row] for row in rows)
    except OSError as e:
        raise ProblemFileError(f"cannot write {path}: {e}") from e
    return path


def read_matrix(path) -> np.ndarray:
    path = pathlib.Path(path)
    if not path.is_file():
        raise ProblemFileError(f"file {path} does not exist")
    if path.suffix not in MATRIX_SUFFIXES:
        raise ProblemFileError(f"{path.suffix} not accepted, expected one of {MATRIX_SUFFIXES}")
    try:
        if path.suffix == ".json":
            matrix = np.asarray(read_json(path), dtype=float)
        elif path.suffix == ".csv":
            with open(path, "r") as f:
                rows, cols = (int(i) for i in f.readline().split(","))
                matrix = np.loadtxt(f, delimiter=",", ndmin=2)
            matrix = matrix.reshape(rows, cols)
        else:
            with open(path, "rb") as f:
                rows, cols = (int(i) for i in f.readline().split())
                matrix = np.frombuffer(f.read(), dtype="<f8").reshape(rows, cols)
    except ValueError as e:
        raise ProblemFileError(f"malformed matrix file {path}: {e}") from e
    return np.array(matrix, dtype=float)


def read_vector(path) -> np.ndarray:
    matrix = read_matrix(path)
    if matrix.ndim == 2 and 1 not in matrix.shape:
        raise DimensionError(f"{path} holds a {matrix.shape} matrix, expected a vector")
    return matrix.ravel()


def write_matrix(path, matrix) -> pathlib.Path:
    path = pathlib.Path(path)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows, cols = matrix.shape
    if path.suffix == ".bin":
        with open(path, "wb") as f:
            f.write(f"{rows} {cols}\n".encode("ascii"))
            f.write(matrix.astype("<f8").tobytes(order="C"))
        return path
    if path.suffix == ".json":
        return write_json(path, matrix)
    with open(path, "w") as f:
        f.write(f"{rows},{cols}\n")
        for row in matrix:
            f.write(",".join(format_float(i) for i in row) + "\n")
    return path
