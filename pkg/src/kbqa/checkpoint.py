"""Versioned binary checkpoints with bit-exact round-trips.

Layout: 8-byte magic, u32 format version, u32 JSON metadata length, metadata
(mode, dim, epoch, config echo, both vocabularies), u32 tensor count, then per
tensor: u16 name length + name, u8 dtype code, u8 rank, u32 dims, raw
little-endian values.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import attention as att
from . import encoder as enc
from .autograd import Tensor
from .model import Mode, Model
from .qa import Vocabulary

MAGIC = b"KBQACKPT"
FORMAT_VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(ValueError):
    pass


def save_bytes(model: Model, epoch: int, config_echo: dict) -> bytes:
    meta = {
        "format_version": FORMAT_VERSION,
        "mode": model.mode.value,
        "dim": model.dim,
        "epoch": epoch,
        "config": config_echo,
        "words": model.word_vocab.words,
        "resources": model.resource_meta,
    }
    meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    named = model.named_parameters()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<I", len(meta_blob))
    out += meta_blob
    out += struct.pack("<I", len(named))
    for name, tensor in named:
        encoded = name.encode("utf-8")
        arr = tensor.data
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<BB", _DTYPE_CODES[arr.dtype.newbyteorder("=")], arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
    return bytes(out)


def save(model: Model, epoch: int, config_echo: dict, path: str | Path) -> None:
    Path(path).write_bytes(save_bytes(model, epoch, config_echo))


def _read(buf: bytes, offset: int, fmt: str):
    size = struct.calcsize(fmt)
    if offset + size > len(buf):
        raise CheckpointError("checkpoint truncated")
    return struct.unpack_from(fmt, buf, offset), offset + size


def load_bytes(blob: bytes) -> tuple[Model, dict]:
    """Rebuild a model from checkpoint bytes; returns (model, metadata)."""
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic header)")
    (version,), offset = _read(blob, 8, "<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not supported; "
            f"this build reads version {FORMAT_VERSION}"
        )
    (meta_len,), offset = _read(blob, offset, "<I")
    meta = json.loads(blob[offset:offset + meta_len].decode("utf-8"))
    offset += meta_len
    (n_tensors,), offset = _read(blob, offset, "<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,), offset = _read(blob, offset, "<H")
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (code, rank), offset = _read(blob, offset, "<BB")
        dims, offset = _read(blob, offset, f"<{rank}I")
        dtype = _DTYPES[code]
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = blob[offset:offset + count * dtype.itemsize]
        offset += count * dtype.itemsize
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    model = _assemble(meta, tensors)
    return model, meta


def load(path: str | Path) -> tuple[Model, dict]:
    return load_bytes(Path(path).read_bytes())


def _gate(tensors: dict, prefix: str) -> enc.GateParams:
    return enc.GateParams(
        wx=Tensor(tensors[f"{prefix}.wx"], is_param=True, name=f"{prefix}.wx"),
        wh=Tensor(tensors[f"{prefix}.wh"], is_param=True, name=f"{prefix}.wh"),
        bias=Tensor(tensors[f"{prefix}.bias"], is_param=True, name=f"{prefix}.bias"),
    )


def _direction(tensors: dict, prefix: str) -> enc.LstmDirection:
    return enc.LstmDirection(
        gates=tuple(_gate(tensors, f"{prefix}.{g}") for g in enc.GATE_ORDER)
    )


def _assemble(meta: dict, tensors: dict[str, np.ndarray]) -> Model:
    mode = Mode.from_string(meta["mode"])
    vocab = Vocabulary(words=list(meta["words"]))
    backward = None
    if mode.bidirectional:
        backward = _direction(tensors, "lstm.backward")
    return Model(
        mode=mode,
        dim=int(meta["dim"]),
        word_vocab=vocab,
        resource_meta=[tuple(pair) for pair in meta["resources"]],
        word_table=Tensor(tensors["word_table"], is_param=True, name="word_table"),
        kb_table=Tensor(tensors["kb_table"], is_param=True, name="kb_table"),
        lstm_forward=_direction(tensors, "lstm.forward"),
        lstm_backward=backward,
        attention=att.AttentionParams(
            w=Tensor(tensors["attention.w"], is_param=True, name="attention.w"),
            bias=Tensor(tensors["attention.bias"], is_param=True, name="attention.bias"),
        ),
    )
