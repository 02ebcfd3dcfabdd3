"""Flat float64 array files.

Layout (all text lines are ASCII, newline terminated)::

    GDCRARR1
    <number of arrays>
    <name> <ndim> <dim0> <dim1> ...     one line per array
    <raw little-endian float64 payload, arrays concatenated in header order>

Encoder checkpoints, memory-bank snapshots and embedding matrices all use this
layout, so any two of them can be diffed with the same tooling.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

MAGIC = b"GDCRARR1"
_DTYPE = np.dtype("<f8")


class ArrayFileError(ValueError):
    """Raised for a malformed array file."""


def dumps_arrays(arrays: dict) -> bytes:
    header = [MAGIC, str(len(arrays)).encode()]
    payload = []
    for name, value in arrays.items():
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"array name {name!r} must be non-empty without whitespace")
        value = np.asarray(value, dtype=np.float64)
        dims = " ".join(str(d) for d in value.shape)
        header.append(f"{name} {value.ndim} {dims}".rstrip().encode())
        payload.append(np.ascontiguousarray(value, dtype=_DTYPE).tobytes())
    return b"\n".join(header) + b"\n" + b"".join(payload)


def loads_arrays(data: bytes) -> dict:
    lines = []
    pos = 0
    while len(lines) < 2 or len(lines) < 2 + int(lines[1]):
        end = data.find(b"\n", pos)
        if end < 0:
            raise ArrayFileError("truncated header")
        lines.append(data[pos:end])
        pos = end + 1
        if len(lines) == 1 and lines[0] != MAGIC:
            raise ArrayFileError(f"bad magic {lines[0][:16]!r}")
        if len(lines) == 2 and not lines[1].isdigit():
            raise ArrayFileError(f"bad array count {lines[1]!r}")

    out = {}
    for line in lines[2:]:
        fields = line.decode("ascii").split()
        try:
            name, ndim = fields[0], int(fields[1])
            shape = tuple(int(f) for f in fields[2:])
        except (IndexError, ValueError) as exc:
            raise ArrayFileError(f"bad shape line {line!r}") from exc
        if len(shape) != ndim:
            raise ArrayFileError(f"shape line {line!r} declares {ndim} dims")
        nbytes = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        chunk = data[pos : pos + nbytes]
        if len(chunk) != nbytes:
            raise ArrayFileError(f"payload for {name!r} is truncated")
        out[name] = np.frombuffer(chunk, dtype=_DTYPE).reshape(shape).astype(np.float64)
        pos += nbytes
    if pos != len(data):
        raise ArrayFileError(f"{len(data) - pos} trailing bytes after payload")
    return out


def save_arrays(path, arrays: dict, digest: bool = True) -> Path:
    """Write ``arrays`` to ``path``; with ``digest`` also write ``<path>.txt``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_arrays(arrays))
    if digest:
        Path(str(path) + ".txt").write_text(digest_text(arrays))
    return path


def load_arrays(path) -> dict:
    return loads_arrays(Path(path).read_bytes())


def digest_text(arrays: dict) -> str:
    """One line per array: name, shape, sum and sha256 of the raw payload."""
    lines = []
    for name, value in arrays.items():
        value = np.ascontiguousarray(value, dtype=_DTYPE)
        sha = hashlib.sha256(value.tobytes()).hexdigest()
        shape = "x".join(str(d) for d in value.shape) or "scalar"
        lines.append(f"{name} shape={shape} sum={float(value.sum())!r} sha256={sha}")
    return "\n".join(lines) + "\n"
