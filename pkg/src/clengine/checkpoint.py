"""Versioned, self-checking checkpoint files.

Layout::

    b"CLCKPT" | u32 format_version | section* 
    section := u16 name_len | name | u64 payload_len | u32 crc32 | payload

Two sections are written: ``meta`` (UTF-8 JSON, arrays replaced by
references) and ``arrays`` (an ``.npz`` archive holding those arrays).
All integers are big-endian.
"""
from __future__ import annotations

import io
import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError, VersionError

MAGIC = b"CLCKPT"
FORMAT_VERSION = 1
_ARRAY_TAG = "__ndarray__"


def _encode(obj, arrays: list):
    if isinstance(obj, np.ndarray):
        arrays.append(obj)
        return {_ARRAY_TAG: len(arrays) - 1}
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if not isinstance(k, str):
                raise TypeError(f"checkpoint dict keys must be strings, got {k!r}")
            out[k] = _encode(v, arrays)
        return out
    if isinstance(obj, (list, tuple)):
        return [_encode(v, arrays) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__} into a checkpoint")


def _decode(obj, arrays):
    if isinstance(obj, dict):
        if set(obj) == {_ARRAY_TAG}:
            return arrays[f"a{obj[_ARRAY_TAG]}"]
        return {k: _decode(v, arrays) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v, arrays) for v in obj]
    return obj


def _section(name: str, payload: bytes) -> bytes:
    nb = name.encode()
    return struct.pack(">H", len(nb)) + nb + struct.pack(">QI", len(payload), zlib.crc32(payload)) + payload


def dumps(state: dict) -> bytes:
    arrays: list = []
    meta = json.dumps(_encode(state, arrays), sort_keys=True).encode()
    buf = io.BytesIO()
    np.savez(buf, **{f"a{i}": a for i, a in enumerate(arrays)})
    return (
        MAGIC
        + struct.pack(">I", FORMAT_VERSION)
        + _section("meta", meta)
        + _section("arrays", buf.getvalue())
    )


def loads(raw: bytes) -> dict:
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack(">I", raw[len(MAGIC) : len(MAGIC) + 4])
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported checkpoint format version {version} (this build reads {FORMAT_VERSION})")
    pos = len(MAGIC) + 4
    sections = {}
    while pos < len(raw):
        if pos + 2 > len(raw):
            raise FormatError("truncated checkpoint (section header)")
        (nlen,) = struct.unpack(">H", raw[pos : pos + 2])
        pos += 2
        if pos + nlen + 12 > len(raw):
            raise FormatError("truncated checkpoint (section header)")
        name = raw[pos : pos + nlen].decode(errors="replace")
        pos += nlen
        plen, crc = struct.unpack(">QI", raw[pos : pos + 12])
        pos += 12
        payload = raw[pos : pos + plen]
        if len(payload) != plen:
            raise FormatError(f"truncated checkpoint (section {name!r})")
        if zlib.crc32(payload) != crc:
            raise FormatError(f"corrupt checkpoint (checksum mismatch in section {name!r})")
        sections[name] = payload
        pos += plen
    missing = {"meta", "arrays"} - set(sections)
    if missing:
        raise FormatError(f"checkpoint lacks section(s) {sorted(missing)}")
    try:
        meta = json.loads(sections["meta"])
        with np.load(io.BytesIO(sections["arrays"]), allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
        return _decode(meta, arrays)
    except (ValueError, KeyError, OSError) as e:
        raise FormatError(f"corrupt checkpoint payload: {e}") from e


def save_checkpoint(path, state: dict) -> None:
    """Atomically write ``state`` (write to a temp file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = dumps(state)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        return loads(f.read())
