"""
FENS checkpoint files.

Layout (little-endian):
    b"FENS" | u32 version | u64 meta_len | meta (UTF-8 JSON)
    repeated: u32 name_len | name (UTF-8) | u8 dtype | u32 rank | u64 dims[rank] | payload

dtype codes: 0 = float32, 1 = float64. Records are the model's learned
parameters, its running statistics and, when present, optimizer buffers
named `optim.<param>.<slot>`. Files are written to a temp name and renamed.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from fens.core.errors import CheckpointError
from fens.tensor.optim import OptimizerState
from fens.zoo.model import Model

MAGIC = b"FENS"
VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}


@dataclass
class Checkpoint:
    meta: Dict[str, Any]
    tensors: Dict[str, np.ndarray]
    version: int = VERSION
    path: Optional[Path] = None

    @property
    def parameter_names(self) -> List[str]:
        return list(self.meta.get("parameters", []))

    @property
    def buffer_names(self) -> List[str]:
        return list(self.meta.get("buffers", []))

    def parameter_scalars(self) -> int:
        return int(sum(self.tensors[name].size for name in self.parameter_names))

    def optimizer_buffers(self) -> Dict[str, np.ndarray]:
        return {name: array for name, array in self.tensors.items() if name.startswith("optim.")}

    def restore_into(self, model: Model) -> None:
        """
        Copy every parameter and buffer into `model`. The name sets must match exactly.
        """
        params = dict(model.named_parameters())
        buffers = dict(model.named_buffers())
        expected = set(params) | set(buffers)
        stored = set(self.parameter_names) | set(self.buffer_names)
        if expected != stored:
            raise CheckpointError(
                "checkpoint tensors do not match the target model",
                details={
                    "missing": sorted(expected - stored)[:10],
                    "unexpected": sorted(stored - expected)[:10],
                },
            )
        for name, param in params.items():
            param.data[...] = _checked(name, self.tensors[name], param.data.shape)
            param.grad = None
        for name, buf in buffers.items():
            buf[...] = _checked(name, self.tensors[name], buf.shape)

    def restore_optimizer(self, state: OptimizerState) -> None:
        state.load_buffers(self.optimizer_buffers())
        state.step_count = int(self.meta.get("optimizer", {}).get("step_count", 0))


def _checked(name: str, array: np.ndarray, shape) -> np.ndarray:
    if array.shape != tuple(shape):
        raise CheckpointError(
            f"tensor {name} has shape {array.shape}, model expects {tuple(shape)}",
            details={"name": name},
        )
    return array


def model_tensors(model: Model) -> Dict[str, np.ndarray]:
    tensors = {name: p.data for name, p in model.named_parameters()}
    tensors.update(model.named_buffers())
    return tensors


def encode(meta: Mapping[str, Any], tensors: Mapping[str, np.ndarray]) -> bytes:
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(meta_bytes)), meta_bytes]
    for name, array in tensors.items():
        arr = np.ascontiguousarray(array)
        if arr.dtype not in _DTYPE_CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor {name}")
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<BI", _DTYPE_CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes, origin: str) -> None:
        self.blob = blob
        self.pos = 0
        self.origin = origin

    def take(self, size: int) -> bytes:
        end = self.pos + size
        if end > len(self.blob):
            raise CheckpointError(
                f"{self.origin}: truncated at byte {self.pos} (needed {size} more)",
                details={"offset": self.pos},
            )
        chunk = self.blob[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def done(self) -> bool:
        return self.pos == len(self.blob)


def decode(blob: bytes, origin: str = "checkpoint") -> Checkpoint:
    reader = _Reader(blob, origin)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{origin}: bad magic, not a fens checkpoint")
    version, meta_len = reader.unpack("<IQ")
    if version != VERSION:
        raise CheckpointError(f"{origin}: version {version} is not supported (expected {VERSION})",
                              details={"version": version})
    try:
        meta = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{origin}: unreadable metadata ({exc})") from exc

    tensors: Dict[str, np.ndarray] = {}
    while not reader.done:
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8", errors="replace")
        code, rank = reader.unpack("<BI")
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"{origin}: unknown dtype code {code} for {name}")
        dims = reader.unpack(f"<{rank}Q") if rank else ()
        dtype = _CODE_DTYPES[code].newbyteorder("<")
        count = int(np.prod(dims)) if dims else 1
        payload = reader.take(count * dtype.itemsize)
        if name in tensors:
            raise CheckpointError(f"{origin}: duplicate tensor {name}")
        tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))
    declared = set(meta.get("parameters", [])) | set(meta.get("buffers", []))
    if not declared <= set(tensors):
        raise CheckpointError(f"{origin}: missing tensors {sorted(declared - set(tensors))[:10]}")
    return Checkpoint(meta=meta, tensors=tensors, version=version)


def save_checkpoint(
    model: Model,
    meta: Mapping[str, Any],
    path: Path,
    optimizer: Optional[OptimizerState] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = model_tensors(model)
    full_meta = dict(meta)
    full_meta["parameters"] = [name for name, _ in model.named_parameters()]
    full_meta["buffers"] = [name for name, _ in model.named_buffers()]
    full_meta["spec"] = model.spec.to_dict()
    if optimizer is not None:
        tensors.update(optimizer.named_buffers())
        full_meta["optimizer"] = {
            "kind": optimizer.kind,
            "step_count": optimizer.step_count,
            **optimizer.hyperparameters(),
        }
    blob = encode(full_meta, tensors)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}", details={"path": str(path)})
    checkpoint = decode(path.read_bytes(), origin=str(path))
    checkpoint.path = path
    return checkpoint
