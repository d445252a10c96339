"""Byte-deterministic model checkpoints.

Layout: magic ``SSCK``, u32 version, u32 metadata length, metadata as
sorted-key JSON, u32 tensor count, then per tensor (sorted by name) a u32
name length, the UTF-8 name and an FT32 blob.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..tensor import Module, ft32

MAGIC = b"SSCK"
VERSION = 1


@dataclass
class ModelCheckpoint:
    kind: str
    tensors: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    version: int = VERSION

    @classmethod
    def from_model(cls, kind: str, model: Module, **metadata) -> "ModelCheckpoint":
        tensors = {}
        steps = {}
        for name, p in model.named_parameters():
            tensors[name] = p.data.copy()
            tensors[f"adam_m/{name}"] = p.adam_m.copy()
            tensors[f"adam_v/{name}"] = p.adam_v.copy()
            steps[name] = int(p.step_count)
        meta = dict(model.config())
        meta["step_counts"] = steps
        meta.update(metadata)
        return cls(kind, tensors, meta)

    def load_into(self, model: Module) -> Module:
        params = dict(model.named_parameters())
        for key in self.tensors:
            base = key.split("/", 1)[1] if key.startswith(("adam_m/", "adam_v/")) else key
            if base not in params:
                raise FormatError(f"checkpoint tensor '{key}' has no matching model parameter")
        for name, p in params.items():
            if name not in self.tensors:
                raise FormatError(f"checkpoint lacks parameter '{name}'")
            arr = self.tensors[name]
            if arr.shape != p.shape:
                raise FormatError(f"'{name}' has shape {arr.shape}, model expects {p.shape}")
            p.data[...] = arr
            if f"adam_m/{name}" in self.tensors:
                p.adam_m[...] = self.tensors[f"adam_m/{name}"]
                p.adam_v[...] = self.tensors[f"adam_v/{name}"]
            p.step_count = int(self.metadata.get("step_counts", {}).get(name, 0))
        return model

    def to_bytes(self) -> bytes:
        meta = dict(self.metadata)
        meta["kind"] = self.kind
        mjson = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [MAGIC, struct.pack("<II", self.version, len(mjson)), mjson,
                 struct.pack("<I", len(self.tensors))]
        for name in sorted(self.tensors):
            nb = name.encode("utf-8")
            parts += [struct.pack("<I", len(nb)), nb, ft32.encode(self.tensors[name])]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "ModelCheckpoint":
        if buf[:4] != MAGIC:
            raise FormatError("not a checkpoint (bad magic)")
        version, mlen = struct.unpack_from("<II", buf, 4)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        off = 12
        meta = json.loads(buf[off:off + mlen].decode("utf-8"))
        off += mlen
        (count,) = struct.unpack_from("<I", buf, off)
        off += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off:off + nlen].decode("utf-8")
            off += nlen
            tensors[name], off = ft32.decode_prefix(buf, off)
        if off != len(buf):
            raise FormatError("trailing bytes after checkpoint tensors")
        kind = meta.pop("kind", "")
        return cls(kind, tensors, meta, version)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        return cls.from_bytes(Path(path).read_bytes())


def build_model(ckpt: ModelCheckpoint):
    """Instantiate the model a checkpoint describes and load its weights."""
    from ..gass import GassModel
    from ..ltfi import LtfiModel

    m = ckpt.metadata
    if ckpt.kind == "gass":
        model = GassModel(int(m["scale"]), int(m["c_f"]), int(m["c_h"]))
    elif ckpt.kind == "ltfi":
        model = LtfiModel(int(m["scale"]), int(m["c_e"]), int(m["c_h"]))
    else:
        raise FormatError(f"unknown checkpoint kind '{ckpt.kind}'")
    return ckpt.load_into(model)
