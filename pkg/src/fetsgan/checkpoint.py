"""Flat binary checkpoint: tensors as float32 LE plus a JSON trailer.

Layout (all integers uint32 little-endian)::

    b"FETS" | version | tensor count
    per tensor: name length | UTF-8 name | rank | dims... | float32 values
    JSON length | UTF-8 JSON (config, data_dim, normalizer, meta)
"""
import io
import json
import struct

import numpy as np

from .config import TrainConfig
from .data import Normalizer
from .errors import CheckpointError
from .networks import init_models

MAGIC = b"FETS"
VERSION = 1
_U32 = struct.Struct("<I")


def _tensors(bundle):
    out = [(name, p.data) for name, p in bundle.named_parameters()]
    out += [(name, getattr(state, attr)) for name, state, attr in bundle.named_buffers()]
    return out


def dumps(bundle, config=None):
    config = config or bundle.config
    buf = io.BytesIO()
    buf.write(MAGIC)
    tensors = _tensors(bundle)
    buf.write(_U32.pack(VERSION))
    buf.write(_U32.pack(len(tensors)))
    for name, arr in tensors:
        raw = name.encode("utf-8")
        buf.write(_U32.pack(len(raw)))
        buf.write(raw)
        buf.write(_U32.pack(arr.ndim))
        for d in arr.shape:
            buf.write(_U32.pack(d))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    blob = json.dumps({
        "config": config.to_dict(),
        "data_dim": bundle.data_dim,
        "normalizer": bundle.normalizer.to_dict() if bundle.normalizer is not None else None,
        "meta": bundle.meta,
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(_U32.pack(len(blob)))
    buf.write(blob)
    return buf.getvalue()


def checkpoint_save(bundle, path, config=None):
    data = dumps(bundle, config)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, field):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"checkpoint truncated while reading {field}", field=field)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, field):
        return _U32.unpack(self.take(4, field))[0]


def loads(data):
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic bytes: not a checkpoint file", field="magic")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})", field="version")
    count = r.u32("tensor count")
    tensors = {}
    for i in range(count):
        n = r.u32(f"tensor {i} name length")
        name = r.take(n, f"tensor {i} name").decode("utf-8")
        rank = r.u32(f"{name} rank")
        shape = tuple(r.u32(f"{name} dims") for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        raw = r.take(4 * size, f"{name} values")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    n = r.u32("json length")
    try:
        meta = json.loads(r.take(n, "json").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"malformed JSON trailer: {exc}", field="json") from None
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after JSON trailer", field="json")

    config = TrainConfig.from_dict(meta["config"])
    bundle = init_models(config, int(meta["data_dim"]), np.random.default_rng(0))
    expected = _tensors(bundle)
    names = [name for name, _ in expected]
    if sorted(names) != sorted(tensors):
        missing = sorted(set(names) - set(tensors))
        extra = sorted(set(tensors) - set(names))
        raise CheckpointError(f"tensor set mismatch: missing {missing}, unexpected {extra}", field="tensors")
    dtype = bundle.dtype
    for name, p in bundle.named_parameters():
        arr = tensors[name]
        if arr.shape != p.data.shape:
            raise CheckpointError(f"shape of {name} is {arr.shape}, model expects {p.data.shape}", field=name)
        p.data = arr.astype(dtype)
    for name, state, attr in bundle.named_buffers():
        arr = tensors[name]
        if arr.shape != getattr(state, attr).shape:
            raise CheckpointError(f"shape of {name} is {arr.shape}, model expects {getattr(state, attr).shape}",
                                  field=name)
        setattr(state, attr, arr.astype(dtype))
    if meta.get("normalizer"):
        bundle.normalizer = Normalizer.from_dict(meta["normalizer"])
    bundle.meta = meta.get("meta") or {}
    return bundle, config


def checkpoint_load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
