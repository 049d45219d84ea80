"""Deterministic single-file checkpoint format.

Layout::

    b"FSKGCKPT"                  8-byte magic
    uint64 little-endian         header length H
    H bytes                      UTF-8 JSON header (sorted keys)
    payload                      concatenated float64 little-endian arrays

The header lists ``arrays``: ``[{"name", "shape", "offset", "count"}]`` with
offsets in bytes relative to the payload start, plus ``adam`` (step counter and
constants, or null) and a free-form ``meta`` object. Parameter arrays use the
prefix ``param/``; Adam moments use ``adam_m/`` and ``adam_v/``. Payloads are
row-major. Writing the same content twice yields identical bytes.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .params import AdamState, ParameterSet

MAGIC = b"FSKGCKPT"


class CorruptCheckpoint(ValueError):
    pass


def _encode(arrays: dict[str, np.ndarray], adam: dict | None, meta: dict | None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "count": a.size})
        chunks.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps(
        {"arrays": entries, "adam": adam, "meta": meta or {}}, sort_keys=True
    ).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def save_checkpoint(
    path: str | os.PathLike,
    params: ParameterSet,
    adam: AdamState | None = None,
    meta: dict | None = None,
) -> None:
    arrays = {f"param/{k}": v for k, v in params.items()}
    adam_header = None
    if adam is not None:
        arrays.update({f"adam_m/{k}": v for k, v in adam.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in adam.v.items()})
        adam_header = {"t": adam.t, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps}
    Path(path).write_bytes(_encode(arrays, adam_header, meta))


def read_checkpoint(path: str | os.PathLike) -> tuple[ParameterSet, AdamState | None, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if 16 + hlen > len(raw):
        raise CorruptCheckpoint(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
        entries = header["arrays"]
    except (ValueError, KeyError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header") from exc
    payload = raw[16 + hlen :]
    expected = sum(8 * e["count"] for e in entries)
    if len(payload) != expected:
        raise CorruptCheckpoint(f"{path}: payload {len(payload)} bytes, expected {expected}")
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
    for e in entries:
        if int(np.prod(e["shape"], dtype=np.int64)) != e["count"]:
            raise CorruptCheckpoint(f"{path}: shape/count mismatch for {e['name']}")
        start = e["offset"]
        arr = np.frombuffer(payload[start : start + 8 * e["count"]], dtype="<f8")
        prefix, _, name = e["name"].partition("/")
        if prefix not in groups:
            raise CorruptCheckpoint(f"{path}: unknown array group {prefix!r}")
        groups[prefix][name] = arr.reshape(e["shape"]).astype(np.float64)
    params = ParameterSet(groups["param"])
    adam = None
    if header.get("adam") is not None:
        a = header["adam"]
        adam = AdamState(
            ParameterSet(groups["adam_m"]), ParameterSet(groups["adam_v"]),
            t=a["t"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"],
        )
    return params, adam, header.get("meta", {})
