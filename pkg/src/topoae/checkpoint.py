"""Binary checkpoint format for :class:`~topoae.nn.MlpModel`.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic b"TOPOAECK"
    offset 8   uint32    format version (1)
    offset 12  uint64    header length H
    offset 20  H bytes   UTF-8 JSON header (sorted keys)
    ...        payload   float64 little-endian arrays, back to back
    last 32    bytes     SHA-256 of everything before it

The header records the architecture, training config, Adam scalars and, per
array, its name, shape and payload offset. Values round-trip bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from topoae.exceptions import ParseError
from topoae.nn import AdamState, MlpModel

MAGIC = b"TOPOAECK"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32


def _arrays(model: MlpModel) -> list:
    out = [("params", k, v) for k, v in model.params.items()]
    out += [("buffers", k, v) for k, v in model.buffers.items()]
    out += [("adam_m", k, v) for k, v in model.optimizer.m.items()]
    out += [("adam_v", k, v) for k, v in model.optimizer.v.items()]
    return out


def dumps(model: MlpModel, config: dict | None = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for group, name, arr in _arrays(model):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"group": group, "name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)
    opt = model.optimizer
    header = {
        "layer_sizes": model.layer_sizes,
        "latent_index": model.latent_index,
        "batch_norm": model.batch_norm,
        "output_activation": model.output_activation,
        "bn_momentum": model.bn_momentum,
        "bn_eps": model.bn_eps,
        "adam": {"beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps, "step": opt.step},
        "config": config or {},
        "arrays": entries,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, VERSION, len(head)) + head + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes) -> tuple:
    """Parse a checkpoint; returns ``(model, config_dict)``."""
    if len(blob) < _PREFIX.size + _DIGEST:
        raise ParseError("truncated checkpoint header", offset=len(blob))
    magic, version, head_len = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ParseError("bad checkpoint magic", offset=0)
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", offset=8)
    head_end = _PREFIX.size + head_len
    if head_end > len(blob) - _DIGEST:
        raise ParseError("truncated checkpoint header", offset=len(blob))
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    try:
        header = json.loads(blob[_PREFIX.size:head_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"corrupt checkpoint header: {exc}", offset=_PREFIX.size) from None
    if hashlib.sha256(body).digest() != digest:
        raise ParseError("checkpoint checksum mismatch", offset=len(body))

    groups = {"params": {}, "buffers": {}, "adam_m": {}, "adam_v": {}}
    payload = memoryview(body)[head_end:]
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        stop = start + 8 * count
        if stop > len(payload):
            raise ParseError(f"array {entry['name']} runs past end of payload", offset=head_end + start)
        arr = np.frombuffer(payload[start:stop], dtype="<f8").astype(np.float64).reshape(shape)
        groups[entry["group"]][entry["name"]] = arr

    adam = header["adam"]
    optimizer = AdamState(adam["beta1"], adam["beta2"], adam["eps"], adam["step"], groups["adam_m"], groups["adam_v"])
    model = MlpModel(
        layer_sizes=list(header["layer_sizes"]),
        params=groups["params"],
        buffers=groups["buffers"],
        latent_index=header["latent_index"],
        batch_norm=header["batch_norm"],
        output_activation=header["output_activation"],
        bn_momentum=header["bn_momentum"],
        bn_eps=header["bn_eps"],
        optimizer=optimizer,
    )
    return model, header["config"]


def save(path, model: MlpModel, config: dict | None = None) -> None:
    Path(path).write_bytes(dumps(model, config))


def load(path) -> tuple:
    return loads(Path(path).read_bytes())
