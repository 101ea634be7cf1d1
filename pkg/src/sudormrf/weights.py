"""Binary weight files (magic "SDRF", version 1).

Layout, all integers little-endian:

    bytes 0-3   magic "SDRF"
    u32         format version (must be 1)
    u32 + utf8  embedded model config as key=value text
    u32         tensor count
    per tensor:
        u32 + utf8   canonical parameter name
        u8           dtype code (0 = float32)
        u8           rank
        u32 * rank   dims
        raw          little-endian float32 data, C order

Tensors are written in canonical parameter order, values cast to float32,
so save -> load round trips bit-identically.  Loading validates every
tensor name and shape against the embedded config before accepting data.
"""

from __future__ import annotations

import struct

import numpy as np

from .config import ModelConfig, parse_kv
from .errors import DataIOError, ValidationError
from .params import param_spec, validate_params

MAGIC = b"SDRF"
VERSION = 1
DTYPE_FLOAT32 = 0

Array = np.ndarray


def weights_to_bytes(cfg: ModelConfig, params: dict[str, Array]) -> bytes:
    validate_params(cfg, params)
    spec = param_spec(cfg)
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    cfg_blob = cfg.to_kv().encode("utf-8")
    out += struct.pack("<I", len(cfg_blob)) + cfg_blob
    out += struct.pack("<I", len(spec))
    for name in spec:
        tensor = np.ascontiguousarray(params[name], dtype="<f4")
        name_blob = name.encode("utf-8")
        out += struct.pack("<I", len(name_blob)) + name_blob
        out += struct.pack("<BB", DTYPE_FLOAT32, tensor.ndim)
        out += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        out += tensor.tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataIOError(f"truncated weight data while reading {what}")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]


def weights_from_bytes(blob: bytes) -> tuple[ModelConfig, dict[str, Array]]:
    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise DataIOError("not an SDRF weight file (bad magic)")
    version = r.u32("version")
    if version != VERSION:
        raise DataIOError(
            f"unsupported SDRF version {version}; this build reads version {VERSION}")
    cfg_blob = r.take(r.u32("config length"), "config text")
    cfg = ModelConfig.from_dict(parse_kv(cfg_blob.decode("utf-8")))
    expected = param_spec(cfg)
    count = r.u32("tensor count")
    if count != len(expected):
        raise ValidationError(
            f"weight file holds {count} tensors, config expects {len(expected)}")
    params: dict[str, Array] = {}
    for _ in range(count):
        name = r.take(r.u32("tensor name length"), "tensor name").decode("utf-8")
        dtype_code = r.u8(f"dtype of {name!r}")
        if dtype_code != DTYPE_FLOAT32:
            raise DataIOError(f"tensor {name!r}: unknown dtype code {dtype_code}")
        rank = r.u8(f"rank of {name!r}")
        shape = tuple(r.u32(f"dim of {name!r}") for _ in range(rank))
        if name not in expected:
            raise ValidationError(f"unexpected tensor {name!r} in weight file")
        if name in params:
            raise ValidationError(f"duplicate tensor {name!r} in weight file")
        want = expected[name].shape
        if shape != want:
            raise ValidationError(
                f"tensor {name!r} has shape {shape}, config expects {want}")
        nbytes = 4 * int(np.prod(shape, dtype=np.int64)) if shape else 4
        raw = r.take(nbytes, f"data of {name!r}")
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if r.pos != len(blob):
        raise DataIOError(f"{len(blob) - r.pos} trailing bytes after last tensor")
    validate_params(cfg, params)
    return cfg, params


def weights_save(path: str, cfg: ModelConfig, params: dict[str, Array]) -> None:
    blob = weights_to_bytes(cfg, params)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise DataIOError(f"cannot write {path!r}: {exc}")


def weights_load(path: str) -> tuple[ModelConfig, dict[str, Array]]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise DataIOError(f"cannot read {path!r}: file not found")
    except OSError as exc:
        raise DataIOError(f"cannot read {path!r}: {exc}")
    return weights_from_bytes(blob)
