"""Binary checkpoint files.

Layout (all integers little-endian)::

    b"PAE1"            magic
    u16                format version (currently 1)
    u32                header length in bytes
    header             UTF-8 JSON: hyperparameters, optimizer scalars, epoch,
                       best loss, RNG state and an array manifest
                       [{name, dtype, shape, offset, nbytes}, ...]
    data               raw little-endian arrays; offsets are relative to the
                       first byte after the header
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from math import prod
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import CheckpointError

MAGIC = b"PAE1"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_DTYPES = {"<f4": np.float32, "<f8": np.float64}


@dataclass
class Checkpoint:
    arch: dict
    params: dict[str, np.ndarray]
    optimizers: dict[str, dict] = field(default_factory=dict)
    epoch: int = 0
    best_loss: Optional[float] = None
    training: Optional[dict] = None
    rng_state: Optional[dict] = None
    version: int = VERSION

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"param/{k}": v for k, v in self.params.items()}
        for group, state in self.optimizers.items():
            for i, (m, v) in enumerate(zip(state["m"], state["v"])):
                out[f"adam/{group}/m/{i}"] = m
                out[f"adam/{group}/v/{i}"] = v
        return out


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    manifest = []
    blobs = []
    offset = 0
    for name, arr in ckpt.arrays().items():
        arr = np.ascontiguousarray(arr)
        code = arr.dtype.newbyteorder("<").str
        if code not in _DTYPES:
            raise CheckpointError("bad-dtype", f"array {name} has unsupported dtype {arr.dtype}", path)
        blob = arr.astype(code, copy=False).tobytes()
        manifest.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "arch": ckpt.arch,
        "training": ckpt.training,
        "epoch": ckpt.epoch,
        "best_loss": ckpt.best_loss,
        "optimizers": {
            g: {k: s[k] for k in ("lr", "betas", "eps", "t")} for g, s in ckpt.optimizers.items()
        },
        "optimizer_sizes": {g: len(s["m"]) for g, s in ckpt.optimizers.items()},
        "rng_state": ckpt.rng_state,
        "arrays": manifest,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(hbytes)))
        fh.write(hbytes)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError("missing", "checkpoint file does not exist", path)
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        if not MAGIC.startswith(raw[:4]):
            raise CheckpointError("bad-magic", "not a ProductAE checkpoint", path)
        raise CheckpointError("truncated", f"file is only {len(raw)} bytes", path)
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError("bad-magic", f"expected magic {MAGIC!r}, found {magic!r}", path)
    if version != VERSION:
        raise CheckpointError("unsupported-version", f"format version {version} (supported: {VERSION})", path)
    start = _PREFIX.size + hlen
    if start > len(raw):
        raise CheckpointError("truncated", "header extends past end of file", path)
    try:
        header: dict[str, Any] = json.loads(raw[_PREFIX.size:start].decode("utf-8"))
        manifest = header["arrays"]
        arch = header["arch"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError("bad-header", f"unreadable header: {exc}", path) from None

    data = memoryview(raw)[start:]
    arrays: dict[str, np.ndarray] = {}
    end = 0
    for entry in manifest:
        try:
            name, code, shape = entry["name"], entry["dtype"], tuple(entry["shape"])
            offset, nbytes = int(entry["offset"]), int(entry["nbytes"])
        except (KeyError, TypeError, ValueError):
            raise CheckpointError("bad-header", f"malformed manifest entry {entry!r}", path) from None
        if code not in _DTYPES:
            raise CheckpointError("bad-header", f"array {name}: unsupported dtype {code}", path)
        if any(int(s) < 0 for s in shape) or nbytes != prod(shape) * np.dtype(code).itemsize:
            raise CheckpointError("bad-header", f"array {name}: size does not match shape {shape}", path)
        if offset < 0 or offset + nbytes > len(data):
            raise CheckpointError("truncated", f"array {name} extends past end of file", path)
        arrays[name] = np.frombuffer(data[offset:offset + nbytes], dtype=code).reshape(shape).copy()
        end = max(end, offset + nbytes)
    if end != len(data):
        raise CheckpointError("bad-header", f"{len(data) - end} unexpected trailing bytes", path)

    params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    optimizers = {}
    for group, scalars in (header.get("optimizers") or {}).items():
        count = header.get("optimizer_sizes", {}).get(group, 0)
        try:
            m = [arrays[f"adam/{group}/m/{i}"] for i in range(count)]
            v = [arrays[f"adam/{group}/v/{i}"] for i in range(count)]
        except KeyError as exc:
            raise CheckpointError("bad-header", f"missing optimizer array {exc}", path) from None
        optimizers[group] = dict(scalars, m=m, v=v)
    return Checkpoint(
        arch=arch,
        params=params,
        optimizers=optimizers,
        epoch=int(header.get("epoch", 0)),
        best_loss=header.get("best_loss"),
        training=header.get("training"),
        rng_state=header.get("rng_state"),
        version=version,
    )
