"""File formats: path CSV, the "MLDP1" binary path dump, control CSV, JSON.

Floats are written with 17 significant digits, enough to round-trip any double,
so re-running a computation reproduces files byte for byte.
"""
import csv
import json
import math
import struct

import numpy as np

from .errors import ConfigurationError, ShapeError
from .evolution import ControlPath
from .gelfand import PathRecord

MAGIC = b"MLDP1"
_HEADER = struct.Struct("<5sQQ")


def fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _rows_to_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigurationError(f"{path}: empty CSV")
        data = [[float(x) for x in row] for row in reader if row]
    return header, np.array(data, dtype=np.float64).reshape(len(data), len(header))


# -- paths ----------------------------------------------------------------------

def path_table(record):
    """Rows [t, node values...] for a path."""
    return np.column_stack([record.time_grid, record.states])


def write_path_csv(record, path):
    header = ["t"] + [f"x{i + 1}" for i in range(record.triple.dim)]
    _rows_to_csv(path, header, path_table(record))


def read_path_csv(path, triple, kind="skeleton"):
    header, data = _read_csv(path)
    if header[0] != "t" or data.shape[1] != triple.dim + 1:
        raise ShapeError(f"{path}: expected columns t + {triple.dim} nodes")
    return PathRecord(data[:, 0], data[:, 1:], kind, triple)


def write_path_binary(record, path):
    """Magic "MLDP1", uint64 rows and columns, then row-major little-endian doubles."""
    table = np.ascontiguousarray(path_table(record), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, table.shape[0], table.shape[1]))
        fh.write(table.tobytes(order="C"))


def read_path_binary(path, triple, kind="skeleton"):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ConfigurationError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ConfigurationError(f"{path}: bad magic {magic!r}")
    body = blob[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise ConfigurationError(f"{path}: expected {rows * cols} doubles, found {len(body) // 8}")
    table = np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)
    if cols != triple.dim + 1:
        raise ShapeError(f"{path}: {cols - 1} node columns but the grid has {triple.dim}")
    return PathRecord(table[:, 0], table[:, 1:], kind, triple)


# -- controls ---------------------------------------------------------------------

def write_control_csv(control, path):
    """Columns t, phi_1..phi_m; t is the left end of each interval."""
    header = ["t"] + [f"phi_{j + 1}" for j in range(control.modes)]
    _rows_to_csv(path, header, np.column_stack([control.time_grid[:-1], control.values]))


def read_control_csv(path, cfg, modes):
    header, data = _read_csv(path)
    if header[0] != "t" or data.shape != (cfg.n_steps, modes + 1):
        raise ShapeError(f"{path}: expected {cfg.n_steps} rows of t + {modes} control columns, got {data.shape}")
    grid = cfg.time_grid
    if np.max(np.abs(data[:, 0] - grid[:-1])) > 1e-9 * cfg.T:
        raise ShapeError(f"{path}: control times do not match the solver grid")
    return ControlPath(grid, data[:, 1:])


# -- JSON -----------------------------------------------------------------------------

def _default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(obj):
    return json.dumps(obj, default=_default, indent=2, sort_keys=True)


def write_json(obj, path):
    with open(path, "w") as fh:
        fh.write(dumps(obj) + "\n")
