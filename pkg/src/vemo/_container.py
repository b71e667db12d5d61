"""Versioned binary container used for checkpoints and dataset caches.

Layout::

    magic        8 bytes, ASCII (e.g. b"VEMOCK01")
    header_len   uint64, little endian
    header       UTF-8 JSON; ``arrays`` lists ``{"name", "shape"}`` in storage order
    payload      every array as little-endian float64, C order, concatenated
"""
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatVersionError, StructureError

_LEN = struct.Struct("<Q")
_DTYPE = np.dtype("<f8")


def write_container(path, magic, header, arrays):
    """Write ``arrays`` (an ordered mapping name -> ndarray) plus a JSON header."""
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    header = dict(header)
    header["arrays"] = [
        {"name": name, "shape": list(np.shape(arr))} for name, arr in arrays.items()
    ]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(_LEN.pack(len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())


def read_container(path, magic):
    """Return ``(header, arrays)``; raises on wrong magic, truncation or trailing bytes."""
    raw = Path(path).read_bytes()
    if len(raw) < 8 + _LEN.size:
        raise StructureError(f"{path}: truncated container ({len(raw)} bytes)")
    if raw[:8] != magic:
        raise FormatVersionError(
            f"{path}: bad magic/version {raw[:8]!r}, expected {magic!r}"
        )
    (hlen,) = _LEN.unpack_from(raw, 8)
    start = 8 + _LEN.size
    if start + hlen > len(raw):
        raise StructureError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StructureError(f"{path}: unreadable header: {exc}") from None
    offset = start + hlen
    arrays = {}
    for spec in header.get("arrays", []):
        shape = tuple(int(s) for s in spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if offset + nbytes > len(raw):
            raise StructureError(f"{path}: truncated payload at array {spec['name']!r}")
        arrays[spec["name"]] = (
            np.frombuffer(raw, dtype=_DTYPE, count=nbytes // 8, offset=offset)
            .reshape(shape)
            .astype(np.float64)
        )
        offset += nbytes
    if offset != len(raw):
        raise StructureError(f"{path}: {len(raw) - offset} unexpected trailing bytes")
    return header, arrays
