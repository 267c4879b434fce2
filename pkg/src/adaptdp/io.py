"""Flat binary (``AREG``) and CSV serialisation of matrices and vectors.

Binary layout: 4-byte magic ``AREG``, little-endian ``u32`` rows, ``u32``
cols, then ``rows * cols`` little-endian float64 values in row-major order.
Vectors are stored as ``n x 1``.
"""

import struct
from pathlib import Path

import numpy as np

from adaptdp.errors import InputError

MAGIC = b"AREG"
_HEADER = struct.Struct("<4sII")


def write_binary(path, array):
    arr = np.asarray(array, dtype="<f8")
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError("only vectors and matrices can be written")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_binary(path, squeeze=True):
    """Read an ``AREG`` file; ``n x 1`` arrays come back as vectors if ``squeeze``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InputError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InputError(f"{path}: bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise InputError(f"{path}: expected {rows * cols} values, found {len(body) // 8}")
    arr = np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(float)
    if squeeze and cols == 1:
        return arr[:, 0]
    return arr


def write_csv(path, array):
    arr = np.asarray(array, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    np.savetxt(path, arr, delimiter=",", fmt="%.17g")


def read_csv(path, squeeze=True):
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if squeeze and arr.shape[1] == 1:
        return arr[:, 0]
    return arr


def save_problem(problem, directory, fmt="binary"):
    """Write ``A``, ``x_true`` and ``y_true`` (unscaled units) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    writer, ext = (write_binary, ".bin") if fmt == "binary" else (write_csv, ".csv")
    s = problem.operator_scale
    paths = {
        "matrix": directory / f"{problem.name}_A{ext}",
        "solution": directory / f"{problem.name}_x{ext}",
        "data": directory / f"{problem.name}_y{ext}",
    }
    writer(paths["matrix"], problem.matrix * s)
    writer(paths["solution"], problem.exact_solution)
    writer(paths["data"], problem.exact_data * s)
    return paths
