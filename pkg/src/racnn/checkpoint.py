"""Single-file model checkpoints.

Layout::

    RACNN-CHECKPOINT v1\\n
    <header length as 8-byte little-endian unsigned int>
    <UTF-8 JSON header: model kind, config, vocabulary, tensor table>
    <tensor payloads, each row-major little-endian float64, in table order>

The tensor table lists ``{"name", "shape"}`` per tensor. Loading returns
arrays bit-identical to the saved ones.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .text import DataError, Vocabulary

MAGIC = b"RACNN-CHECKPOINT v1\n"


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: Vocabulary
    params: dict[str, np.ndarray]
    extra: dict | None = None

    @property
    def model(self) -> str:
        return self.config.model


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    names = sorted(ckpt.params)
    header = {
        "model": ckpt.config.model,
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab.tokens,
        "tensors": [{"name": n, "shape": list(ckpt.params[n].shape)} for n in names],
        "extra": ckpt.extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(ckpt.params[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos:pos + n].decode("utf-8"))
    pos += n
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 8
        if pos + size > len(data):
            raise DataError(f"{path}: truncated tensor {entry['name']}")
        params[entry["name"]] = np.frombuffer(data, dtype="<f8", count=size // 8,
                                              offset=pos).reshape(shape).astype(np.float64)
        pos += size
    if pos != len(data):
        raise DataError(f"{path}: {len(data) - pos} trailing bytes")
    return Checkpoint(TrainConfig.from_dict(header["config"]), Vocabulary(header["vocab"]),
                      params, header.get("extra") or None)
