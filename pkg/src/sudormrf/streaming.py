"""Chunked real-time inference for the causal variant.

State consists of the last ``K-1`` inputs of every causal convolution (raw
samples for the encoder, frames at the layer's own rate for each depthwise
conv) plus a per-source overlap-add tail for the decoder.  Buffers start at
zero, which is exactly the zero left-padding the batch forward uses, so
concatenated push outputs reproduce the batch output up to float summation
order at chunk boundaries.

Chunks are raw waveform samples (no per-clip standardization: a live stream
has no clip statistics).  The hop must be a multiple of the encoder stride
times the total downsampling factor so every scale sees whole frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .errors import ValidationError
from . import ops

Array = np.ndarray


def latency_samples(cfg: ModelConfig, hop: int) -> int:
    """Algorithmic latency of hop-sized processing: a sample can be emitted
    only once its chunk completes, plus the encoder's look-back alignment."""
    if hop < 1 or hop % cfg.hop_alignment:
        raise ValidationError(
            f"hop must be a positive multiple of {cfg.hop_alignment}, got {hop}")
    return hop + cfg.enc_stride - 1


def _valid_conv(xc: Array, weight: Array, bias: Array, stride: int,
                groups: int) -> Array:
    """Unpadded conv over a context-prefixed chunk.

    Same tap-ascending accumulation as the batch kernel, so each frame is
    bit-identical to its batch counterpart.
    """
    c_out, c_in_pg, kernel = weight.shape
    l_out = (xc.shape[1] - kernel) // stride + 1
    y = np.zeros((c_out, l_out), dtype=xc.dtype)
    for k in range(kernel):
        xs = xc[:, k:k + stride * l_out:stride]
        if groups == 1:
            y += weight[:, :, k] @ xs
        else:
            y += weight[:, 0, k][:, None] * xs
    y += bias[:, None]
    return y


@dataclass
class StreamState:
    cfg: ModelConfig
    params: dict[str, Array]
    hop: int = 0                      # fixed on first push
    pushed: int = 0                   # total samples consumed
    enc_buf: Array = field(default=None)          # [1, K_E-1]
    dw_bufs: dict[tuple[int, int], Array] = field(default_factory=dict)
    dec_tails: Array = field(default=None)        # [N, K_E-stride]


def stream_init(cfg: ModelConfig, params: dict[str, Array]) -> StreamState:
    if not cfg.is_causal:
        raise ValidationError(
            f"streaming requires the causal variant, got {cfg.variant!r}")
    dtype = params["encoder.weight"].dtype
    state = StreamState(cfg=cfg, params=params)
    state.enc_buf = np.zeros((1, cfg.enc_kernel - 1), dtype=dtype)
    for b in range(cfg.num_blocks):
        for q in range(cfg.resampling_depth + 1):
            state.dw_bufs[(b, q)] = np.zeros(
                (cfg.hidden_channels, cfg.dw_kernel - 1), dtype=dtype)
    tail = max(0, cfg.enc_kernel - cfg.enc_stride)
    state.dec_tails = np.zeros((cfg.n_sources, tail), dtype=dtype)
    return state


def _pointwise(P, prefix: str, x: Array) -> Array:
    return _valid_conv(x, P[f"{prefix}.weight"], P[f"{prefix}.bias"], 1, 1)


def _act(P, prefix: str, x: Array) -> Array:
    return ops.prelu(x, P[f"{prefix}.slope"])


def stream_push(state: StreamState, chunk: Array) -> Array:
    """Consume a hop of samples, return the next [N, hop] of every source."""
    cfg, P = state.cfg, state.params
    x = np.asarray(chunk, dtype=state.enc_buf.dtype).reshape(-1)
    if x.shape[0] == 0 or x.shape[0] % cfg.hop_alignment:
        raise ValidationError(
            f"chunk of {x.shape[0]} samples is not a positive multiple of the "
            f"hop alignment {cfg.hop_alignment}")
    if state.hop == 0:
        state.hop = x.shape[0]
    elif x.shape[0] != state.hop:
        raise ValidationError(
            f"hop is fixed per session: expected {state.hop}, got {x.shape[0]}")
    if not np.isfinite(x).all():
        raise ValidationError("chunk contains non-finite samples")
    hop = x.shape[0]

    # encoder
    xc = np.concatenate([state.enc_buf, x.reshape(1, -1)], axis=1)
    state.enc_buf = xc[:, -(cfg.enc_kernel - 1):].copy()
    vx = ops.relu(_valid_conv(xc, P["encoder.weight"], P["encoder.bias"],
                              cfg.enc_stride, 1))

    # separator (the causal variant has no normalization layers)
    y = _pointwise(P, "bottleneck.proj", vx)
    s_str = cfg.resampling_stride
    for b in range(cfg.num_blocks):
        p = f"block{b}"
        h = _act(P, f"{p}.expand.act", _pointwise(P, f"{p}.expand", y))
        scales = []
        cur = h
        for q in range(cfg.resampling_depth + 1):
            stride = 1 if q == 0 else s_str
            buf = state.dw_bufs[(b, q)]
            c = np.concatenate([buf, cur], axis=1)
            state.dw_bufs[(b, q)] = c[:, -(cfg.dw_kernel - 1):].copy()
            cur = _valid_conv(c, P[f"{p}.dw{q}.weight"], P[f"{p}.dw{q}.bias"],
                              stride, cfg.hidden_channels)
            cur = _act(P, f"{p}.dw{q}.act", cur)
            scales.append(cur)
        fused = scales[-1]
        for q in range(cfg.resampling_depth - 1, -1, -1):
            fused = ops.nearest_interp(fused, s_str, scales[q].shape[1]) + scales[q]
        f = _act(P, f"{p}.fuse.act", fused)
        y = _act(P, f"{p}.out.act", _pointwise(P, f"{p}.contract", f) + y)

    # heads and the emit-forward decoder with overlap-add carry
    kernel, stride = cfg.enc_kernel, cfg.enc_stride
    w_dec, b_dec = P["decoder.weight"], P["decoder.bias"]
    tail = max(0, kernel - stride)
    outs = np.empty((cfg.n_sources, hop), dtype=x.dtype)
    for j in range(cfg.n_sources):
        z = _pointwise(P, f"head{j}", y)              # [C_E, hop/stride]
        n = z.shape[1]
        em = np.zeros((1, n * stride + tail), dtype=x.dtype)
        for k in range(kernel):
            em[:, k:k + stride * n:stride] += w_dec[:, :, k].T @ z
        em[:, :tail] += state.dec_tails[j]
        state.dec_tails[j] = em[0, n * stride:].copy()
        outs[j] = em[0, :hop] + b_dec[0]
    state.pushed += hop
    return outs
