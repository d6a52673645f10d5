"""Binary checkpoint container.

Layout (all integers little-endian unsigned 32-bit)::

    b"ACTG" | version | manifest length | manifest (UTF-8 JSON) | tensor count
    then per tensor: name length | name (UTF-8) | rank | dims... | float64 data (little-endian)
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError

MAGIC = b"ACTG"
VERSION = 1
_U32 = struct.Struct("<I")


def _write_u32(fh, value):
    fh.write(_U32.pack(value))


def _read_u32(fh):
    raw = fh.read(4)
    if len(raw) != 4:
        raise DataFormatError("checkpoint truncated")
    return _U32.unpack(raw)[0]


def dumps(params: dict, manifest: dict) -> bytes:
    fh = io.BytesIO()
    fh.write(MAGIC)
    _write_u32(fh, VERSION)
    text = json.dumps(manifest, sort_keys=True).encode("utf-8")
    _write_u32(fh, len(text))
    fh.write(text)
    _write_u32(fh, len(params))
    for name, value in params.items():
        value = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        _write_u32(fh, len(encoded))
        fh.write(encoded)
        _write_u32(fh, value.ndim)
        for d in value.shape:
            _write_u32(fh, d)
        fh.write(value.tobytes(order="C"))
    return fh.getvalue()


def loads(blob: bytes):
    """Return ``(manifest, params)``."""
    fh = io.BytesIO(blob)
    if fh.read(4) != MAGIC:
        raise DataFormatError("not an ACTG checkpoint")
    version = _read_u32(fh)
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", expected=VERSION, actual=version)
    manifest = json.loads(fh.read(_read_u32(fh)).decode("utf-8"))
    params = {}
    for _ in range(_read_u32(fh)):
        name = fh.read(_read_u32(fh)).decode("utf-8")
        shape = tuple(_read_u32(fh) for _ in range(_read_u32(fh)))
        count = int(np.prod(shape, dtype=np.int64))
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise DataFormatError(f"tensor {name} truncated", expected=8 * count, actual=len(raw))
        params[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    return manifest, params


def save_checkpoint(path, params: dict, manifest: dict):
    Path(path).write_bytes(dumps(params, manifest))


def load_checkpoint(path):
    return loads(Path(path).read_bytes())
