"""WAV reading and writing for mono 8/16 kHz clips.

Only the two encodings the engine produces and consumes are supported:
16-bit PCM (decoded as v/32768) and 32-bit IEEE float (passed through
bit-exactly).  Everything else fails loudly with the offending field
named, rather than resampling or downmixing behind the caller's back.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .config import SAMPLE_RATES
from .errors import DataIOError

PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class WavClip:
    sample_rate: int
    samples: np.ndarray      # 1-D float32


def _as_clip(rate: int, data: np.ndarray, where: str) -> WavClip:
    if rate not in SAMPLE_RATES:
        raise DataIOError(
            f"{where}: sample_rate {rate} unsupported; expected one of {SAMPLE_RATES}")
    if data.ndim != 1:
        channels = data.shape[1] if data.ndim == 2 else data.ndim
        raise DataIOError(f"{where}: channels must be 1, got {channels}")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.copy()
    else:
        raise DataIOError(
            f"{where}: encoding {data.dtype.name!r} unsupported; "
            "expected pcm16 or float32")
    return WavClip(sample_rate=int(rate), samples=samples)


def wav_read(path: str) -> WavClip:
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise DataIOError(f"cannot read {path!r}: file not found")
    except ValueError as exc:
        raise DataIOError(f"cannot read {path!r}: {exc}")
    return _as_clip(rate, data, path)


def wav_from_bytes(blob: bytes) -> WavClip:
    try:
        rate, data = wavfile.read(io.BytesIO(blob))
    except ValueError as exc:
        raise DataIOError(f"cannot parse wav bytes: {exc}")
    return _as_clip(rate, data, "wav bytes")


def _encode(clip: WavClip, encoding: str) -> np.ndarray:
    if clip.sample_rate not in SAMPLE_RATES:
        raise DataIOError(
            f"sample_rate {clip.sample_rate} unsupported; "
            f"expected one of {SAMPLE_RATES}")
    samples = np.asarray(clip.samples)
    if samples.ndim != 1:
        raise DataIOError(f"channels must be 1, got array of rank {samples.ndim}")
    if encoding == "float32":
        return samples.astype(np.float32, copy=False)
    if encoding == "pcm16":
        # quantize with saturation so full-scale -1.0 maps to -32768
        q = np.round(samples.astype(np.float64) * PCM16_SCALE)
        return np.clip(q, -32768, 32767).astype(np.int16)
    raise DataIOError(
        f"encoding {encoding!r} unsupported; expected pcm16 or float32")


def wav_write(path: str, clip: WavClip, encoding: str = "float32") -> None:
    data = _encode(clip, encoding)
    try:
        wavfile.write(path, clip.sample_rate, data)
    except OSError as exc:
        raise DataIOError(f"cannot write {path!r}: {exc}")


def wav_to_bytes(clip: WavClip, encoding: str = "float32") -> bytes:
    buf = io.BytesIO()
    wavfile.write(buf, clip.sample_rate, _encode(clip, encoding))
    return buf.getvalue()
