"""Checkpoint files.

Binary layout (all integers little-endian)::

    magic       8 bytes   b"FAMCKPT1"
    header_len  uint32
    header      header_len bytes of UTF-8 JSON (config, step, dev loss, metadata)
    n_tensors   uint32
    n_tensors times:
        name_len  uint16
        name      name_len bytes UTF-8
        ndim      uint8
        shape     ndim x uint32
        data      prod(shape) x float32 (little-endian, C order)

Optimizer moments are stored as ordinary tensors under ``adam.m/<param>``
and ``adam.v/<param>``; per-parameter Adam step counts live in the header.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import Encoder, EncoderConfig

MAGIC = b"FAMCKPT1"


class CheckpointFormatError(ValueError):
    pass


def write_tensor_file(path, header: dict, tensors: dict):
    path = Path(path)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def read_tensor_file(path):
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {data[:8]!r}")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointFormatError(f"{path}: truncated at byte {pos}")
        values = struct.unpack_from(fmt, data, pos)
        pos += size
        return values

    (hlen,) = take("<I")
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if ndim else 1
        if pos + 4 * n > len(data):
            raise CheckpointFormatError(f"{path}: truncated tensor {name}")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(shape).copy()
        pos += 4 * n
    return header, tensors


@dataclass
class EncoderCheckpoint:
    config: EncoderConfig
    params: dict
    step: int = 0
    dev_loss: float = float("nan")
    optimizer: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_encoder(self, dtype=np.float64) -> Encoder:
        enc = Encoder.build(self.config, dtype=dtype)
        enc.load_state(self.params)
        return enc

    @classmethod
    def from_encoder(cls, encoder, step=0, dev_loss=float("nan"), optimizer=None, meta=None):
        return cls(encoder.config, encoder.state(), step, dev_loss, optimizer, dict(meta or {}))


def save_checkpoint(path, ckpt: EncoderCheckpoint):
    header = {
        "kind": "encoder",
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "dev_loss": ckpt.dev_loss if np.isfinite(ckpt.dev_loss) else None,
        "meta": ckpt.meta,
    }
    tensors = dict(ckpt.params)
    if ckpt.optimizer is not None:
        header["adam_t"] = ckpt.optimizer["t"]
        for name, arr in ckpt.optimizer["m"].items():
            tensors[f"adam.m/{name}"] = arr
        for name, arr in ckpt.optimizer["v"].items():
            tensors[f"adam.v/{name}"] = arr
    write_tensor_file(path, header, tensors)


def load_checkpoint(path) -> EncoderCheckpoint:
    header, tensors = read_tensor_file(path)
    if header.get("kind") != "encoder":
        raise CheckpointFormatError(f"{path}: not an encoder checkpoint")
    params = {n: a for n, a in tensors.items() if not n.startswith("adam.")}
    optimizer = None
    if "adam_t" in header:
        optimizer = {
            "m": {n[len("adam.m/"):]: a for n, a in tensors.items() if n.startswith("adam.m/")},
            "v": {n[len("adam.v/"):]: a for n, a in tensors.items() if n.startswith("adam.v/")},
            "t": header["adam_t"],
        }
    dev = header.get("dev_loss")
    return EncoderCheckpoint(
        config=EncoderConfig(**header["config"]),
        params=params,
        step=header["step"],
        dev_loss=float("nan") if dev is None else dev,
        optimizer=optimizer,
        meta=header.get("meta", {}),
    )
