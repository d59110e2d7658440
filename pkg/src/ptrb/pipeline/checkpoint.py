"""Binary checkpoint format.

Layout: ``b"PTRB"``, u32 version, u32 length + UTF-8 JSON header, then
records of (u32 name length, name, u8 dtype tag, u8 rank, u32 dims...,
raw little-endian values). All integers are little-endian. Dtype tag 0 is
float32 and 1 is float64.

Names prefixed ``buffer:`` are non-trainable buffers; ``optim.m:`` and
``optim.v:`` are AdamW moments.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..layers import ParamStore

MAGIC = b"PTRB"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {"float32": 0, "float64": 1}


class CheckpointError(ValueError):
    pass


def _records(store, include_optimizer):
    for name, p in store.named_parameters():
        yield name, p.data
    for name, b in store.buffers.items():
        yield f"buffer:{name}", b
    if include_optimizer:
        for name, st in store.state.items():
            yield f"optim.m:{name}", st["m"]
            yield f"optim.v:{name}", st["v"]


def save_checkpoint(path, store, config, meta=None, dtype="float32", include_optimizer=False):
    if dtype not in _TAGS:
        raise CheckpointError(f"unsupported storage dtype {dtype!r}")
    tag = _TAGS[dtype]
    meta = dict(meta or {})
    meta["optimizer_step"] = store.step
    header = json.dumps({"config": config, "meta": meta}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(header)), header]
    for name, arr in _records(store, include_optimizer):
        nb = name.encode()
        arr = np.asarray(arr)
        parts.append(struct.pack("<I", len(nb)) + nb + struct.pack("<BB", tag, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Return ``(ParamStore, config dict, meta dict)``; values are widened to float64."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e.strerror}") from e
    r = _Reader(buf, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(r.take(hlen).decode())
        config, meta = header["config"], header.get("meta", {})
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: malformed header: {e}") from e
    store = ParamStore()
    moments = {}
    while r.pos < len(buf):
        (nlen,) = r.unpack("<I")
        try:
            name = r.take(nlen).decode()
        except UnicodeDecodeError:
            raise CheckpointError(f"{path}: bad record name at byte {r.pos}") from None
        tag, rank = r.unpack("<BB")
        if tag not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype tag {tag} for {name!r}")
        shape = r.unpack(f"<{rank}I")
        dt = _DTYPES[tag]
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(count * dt.itemsize), dtype=dt).reshape(shape).astype(np.float64)
        kind, _, key = name.partition(":")
        if kind == "buffer":
            store.add_buffer(key, arr)
        elif kind in ("optim.m", "optim.v"):
            moments.setdefault(key, {})[kind[-1]] = arr
        else:
            store.add(name, arr)
    for key, st in moments.items():
        if key not in store or set(st) != {"m", "v"}:
            raise CheckpointError(f"{path}: optimizer state for unknown parameter {key!r}")
        store.state[key] = st
    store.step = int(meta.get("optimizer_step", 0))
    return store, config, meta
