"""Binary checkpoint container.

Layout, all integers little-endian::

    b"CLRA" | version u32 | tensor count u32
    per tensor: name length u32 | UTF-8 name | rank u32 | dims u64 * rank
                | payload float64 row-major
    CRC-32 u32 of every preceding byte

Model parameters are stored under their parameter names, adapters as
``lora.<target>.A`` / ``lora.<target>.B``. Metadata rides along as small
tensors: ``meta.model_spec``, ``meta.frozen_mask`` and, with adapters,
``meta.lora`` = (rank, scaling, init std).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import fields
from pathlib import Path

import numpy as np

from ..autodiff import Tensor
from ..errors import CheckpointError
from ..lora import AdapterSet, LoRAAdapter
from ..nn import DECODER, ModelSpec, SegModel

MAGIC = b"CLRA"
VERSION = 1


def encode(tensors: list[tuple[str, np.ndarray]]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode(buf: bytes) -> list[tuple[str, np.ndarray]]:
    if len(buf) < 16 or buf[:4] != MAGIC:
        raise CheckpointError("not a CLRA checkpoint (bad magic)")
    (version, count) = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch: checkpoint is corrupted")
    pos = 12
    out = []
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            name = body[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", body, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", body, pos)
            pos += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            if pos + 8 * n > len(body):
                raise CheckpointError(f"tensor {name!r} payload truncated")
            arr = np.frombuffer(body, dtype="<f8", count=n, offset=pos).reshape(dims).astype(np.float64)
            pos += 8 * n
            out.append((name, arr))
    except struct.error:
        raise CheckpointError("checkpoint truncated") from None
    if pos != len(body):
        raise CheckpointError("trailing bytes after last tensor")
    return out


def _spec_vector(spec: ModelSpec) -> np.ndarray:
    return np.array([getattr(spec, f.name) for f in fields(ModelSpec)], dtype=np.float64)


def checkpoint_tensors(model: SegModel, adapters: AdapterSet | None = None) -> list[tuple[str, np.ndarray]]:
    named = model.named_parameters()
    tensors = [(name, p.data) for name, p in named]
    tensors.append(("meta.model_spec", _spec_vector(model.spec)))
    tensors.append(("meta.frozen_mask", np.array([0.0 if p.requires_grad else 1.0 for _, p in named])))
    if adapters is not None and not adapters.merged:
        tensors.append(("meta.lora", np.array([adapters.rank, adapters.scaling, adapters.init_std])))
    return tensors


def save_checkpoint(model: SegModel, adapters: AdapterSet | None, path) -> None:
    try:
        Path(path).write_bytes(encode(checkpoint_tensors(model, adapters)))
    except OSError as exc:
        raise CheckpointError(f"cannot write {path}: {exc}") from exc


def load_checkpoint(path) -> tuple[SegModel, AdapterSet | None]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    tensors = dict(decode(buf))
    if "meta.model_spec" not in tensors:
        raise CheckpointError("checkpoint lacks meta.model_spec")
    vec = tensors.pop("meta.model_spec")
    spec = ModelSpec(**{f.name: int(v) for f, v in zip(fields(ModelSpec), vec)})
    mask = tensors.pop("meta.frozen_mask", None)
    lora_meta = tensors.pop("meta.lora", None)

    model = SegModel(spec, seed=0)
    adapter_set = None
    if lora_meta is not None:
        rank, scaling, std = int(lora_meta[0]), float(lora_meta[1]), float(lora_meta[2])
        adapters = {}
        for name in model.layers:
            key = f"lora.{name}.A"
            if key in tensors:
                a = Tensor(tensors[key], requires_grad=True)
                b = Tensor(tensors.get(f"lora.{name}.B", np.zeros((rank, 0))), requires_grad=True)
                model.layers[name].adapter = adapters[name] = LoRAAdapter(name, rank, a, b, scaling)
        targets = tuple(sorted({n.split(".", 1)[1] for n in adapters}))
        adapter_set = AdapterSet(adapters, rank, scaling, targets, std)

    named = model.named_parameters()
    for name, p in named:
        if name not in tensors:
            raise CheckpointError(f"checkpoint lacks tensor {name!r}")
        arr = tensors.pop(name)
        if arr.shape != p.shape:
            raise CheckpointError(f"tensor {name!r} has shape {arr.shape}, model expects {p.shape}")
        p.data = arr
    if tensors:
        raise CheckpointError(f"unexpected tensors {sorted(tensors)[:5]}")
    if mask is not None:
        if mask.shape != (len(named),):
            raise CheckpointError("meta.frozen_mask length does not match parameters")
        for (_, p), frozen in zip(named, mask):
            p.set_requires_grad(not bool(frozen))
    assert model.layers[DECODER].d_out == spec.num_classes
    return model, adapter_set


__all__ = ["save_checkpoint", "load_checkpoint", "encode", "decode"]
