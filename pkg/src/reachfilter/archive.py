"""Binary value-function archive.

Layout (little-endian)::

    b"HJVF"            magic
    u32                format version
    u8                 mode byte: bit 0 safety, bit 1 converged
    u32                dim count n
    n x {u64 count, f64 lo, f64 hi, u8 periodic}
    u64                time count T
    T x f64            times, ascending
    f64[T, *counts]    slices, C-order, time-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid import GridDef, ScalarField
from .hji import Mode, ValueFunction

MAGIC = b"HJVF"
VERSION = 1
_DIM = struct.Struct("<QddB")


class ArchiveError(ValueError):
    """Malformed or unsupported archive."""


def encode(vf: ValueFunction) -> bytes:
    g = vf.grid
    mode = (1 if vf.mode is Mode.SAFETY else 0) | (2 if vf.converged else 0)
    parts = [MAGIC, struct.pack("<IBI", VERSION, mode, g.ndim)]
    for c, lo, hi, p in zip(g.counts, g.lo, g.hi, g.periodic):
        parts.append(_DIM.pack(c, lo, hi, int(p)))
    times = np.ascontiguousarray(vf.times, dtype="<f8")
    parts.append(struct.pack("<Q", times.size))
    parts.append(times.tobytes())
    parts.append(np.ascontiguousarray(vf.values_array(), dtype="<f8").tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> ValueFunction:
    view = memoryview(buf)
    if bytes(view[:4]) != MAGIC:
        raise ArchiveError("not a value-function archive (bad magic)")
    try:
        version, mode, ndim = struct.unpack_from("<IBI", view, 4)
        if version != VERSION:
            raise ArchiveError(f"unsupported archive version {version}")
        if mode & ~3:
            raise ArchiveError(f"bad mode byte {mode:#x}")
        off = 4 + 9
        dims = []
        for _ in range(ndim):
            c, lo, hi, p = _DIM.unpack_from(view, off)
            off += _DIM.size
            dims.append((c, lo, hi, bool(p)))
        (nt,) = struct.unpack_from("<Q", view, off)
        off += 8
        times = np.frombuffer(view, dtype="<f8", count=nt, offset=off).astype(np.float64)
        off += 8 * nt
    except struct.error as e:
        raise ArchiveError(f"truncated archive header ({e})") from None
    try:
        grid = GridDef.build(dims)
    except ValueError as e:
        raise ArchiveError(f"bad grid in archive: {e}") from None
    n = nt * grid.size
    if len(view) - off != 8 * n:
        raise ArchiveError(f"payload holds {len(view) - off} bytes, expected {8 * n}")
    data = np.frombuffer(view, dtype="<f8", count=n, offset=off).astype(np.float64).reshape((nt,) + grid.shape)
    slices = [ScalarField(grid, s) for s in data]
    return ValueFunction(grid, times, slices, Mode.SAFETY if mode & 1 else Mode.LIVENESS,
                         converged=bool(mode & 2))


def save(vf: ValueFunction, path: str | Path) -> None:
    Path(path).write_bytes(encode(vf))


def load(path: str | Path) -> ValueFunction:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise ArchiveError(f"{path}: {e.strerror}") from None
    return decode(buf)
