"""MSDE trajectory files and CSV emission.

Layout (little-endian): ``b"MSDE"``, version u32, dim u32, n_samples u64,
dt f64, origin_time f64, seed u64, then ``n_samples x dim`` f64 rows in
time order.  ``origin_time`` is the time of the first row.
"""
from __future__ import annotations

import hashlib
import math
import os
import struct
from typing import NamedTuple

import numpy as np

from ..errors import FormatError
from ..pathspace import FullPath, FuturePath, HistoryPath, snap_index

__all__ = [
    "MAGIC",
    "VERSION",
    "HEADER",
    "TrajectoryFile",
    "write_trajectory",
    "read_trajectory",
    "save_path",
    "load_trajectory",
    "emit_csv",
    "file_digest",
]

MAGIC = b"MSDE"
VERSION = 1
HEADER = struct.Struct("<4sIIQddQ")


class TrajectoryFile(NamedTuple):
    samples: np.ndarray  # (n, dim), oldest first
    dt: float
    origin_time: float
    seed: int
    version: int


def write_trajectory(path, samples, dt: float, origin_time: float = 0.0, seed: int = 0) -> None:
    arr = np.asarray(samples, dtype="<f8")
    if arr.ndim == 1:
        arr = arr[:, None]
    header = HEADER.pack(MAGIC, VERSION, arr.shape[1], arr.shape[0], float(dt), float(origin_time), int(seed))
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(arr).tobytes())


def read_trajectory(path) -> TrajectoryFile:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: header needs {HEADER.size} bytes, found {len(raw)}")
    magic, version, dim, n, dt, t0, seed = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version, expected {VERSION}, found {version}")
    need = HEADER.size + 8 * dim * n
    if len(raw) != need:
        raise FormatError(f"{path}: body size mismatch, expected {need} bytes, found {len(raw)}")
    if dim < 1 or not (dt > 0 and math.isfinite(dt)):
        raise FormatError(f"{path}: invalid header (dim={dim}, dt={dt})")
    body = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(n, dim).astype(float)
    return TrajectoryFile(body, dt, t0, seed, version)


def save_path(path, p, seed: int = 0) -> None:
    """Write a FullPath, FuturePath or HistoryPath in time order."""
    if isinstance(p, FullPath):
        z = p.chronological()
        t0 = p.origin_time - p.index0 * p.dt
    elif isinstance(p, FuturePath):
        z, t0 = p.samples, p.origin_time
    elif isinstance(p, HistoryPath):
        z, t0 = p.samples[::-1], p.origin_time - p.window
    else:
        raise TypeError(f"cannot save {type(p).__name__}")
    write_trajectory(path, z, p.dt, t0, seed)


def load_trajectory(path) -> FullPath:
    """Read a file and split it at the row nearest ``t = 0`` (clamped to the stored range)."""
    tf = read_trajectory(path)
    if tf.samples.shape[0] == 0:
        raise FormatError(f"{path}: file holds no samples")
    k0 = min(max(snap_index(-tf.origin_time, tf.dt), 0), tf.samples.shape[0] - 1)
    t_split = tf.origin_time + k0 * tf.dt
    past = HistoryPath(tf.samples[k0::-1], tf.dt, origin_time=t_split)
    fut = FuturePath(tf.samples[k0:], tf.dt, origin_time=t_split)
    return FullPath(past, fut)


def emit_csv(series, path, columns=None) -> None:
    """Write columns with a header row; floats use 17 significant digits.

    ``series`` is a mapping of name to 1-D array, or a 2-D array with
    ``columns`` naming its columns.
    """
    if isinstance(series, dict):
        names = list(series)
        cols = [np.asarray(v, dtype=float).ravel() for v in series.values()]
        if len({c.shape[0] for c in cols}) > 1:
            raise ValueError("all columns must have equal length")
        data = np.column_stack(cols) if cols else np.empty((0, 0))
    else:
        data = np.asarray(series, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        names = list(columns) if columns is not None else [f"c{j}" for j in range(data.shape[1])]
        if len(names) != data.shape[1]:
            raise ValueError("one name per column required")
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(names), comments="")


def read_csv(path):
    with open(path) as f:
        names = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {n: data[:, j] for j, n in enumerate(names)} if data.size else {n: np.empty(0) for n in names}


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
