"""Separation model variants composed from the kernel library.

The forward pass is written once against a small backend protocol
(:class:`EagerOps` here, ``TapedOps`` in :mod:`.autograd`), so inference,
FLOP instrumentation, and reverse-mode training all execute the exact same
op sequence.

Pipeline: strided-conv encoder with ReLU -> bottleneck norm + pointwise
projection -> B U-shaped residual blocks -> per-source framewise heads ->
(base variant only) softmax masks over the encoded mixture -> transposed-conv
decoder per source (base) or one shared decoder (the other variants).
"""

from __future__ import annotations

import numpy as np

from . import ops
from .config import ModelConfig
from .errors import ValidationError

Array = np.ndarray


class EagerOps:
    """Direct numpy execution with optional FLOP recording."""

    def __init__(self, recorder: ops.FlopRecorder | None = None) -> None:
        self.recorder = recorder

    def conv1d(self, x, w, b, stride=1, groups=1, causal=False):
        return ops.conv1d(x, w, b, stride, groups, causal, self.recorder)

    def conv_transpose1d(self, v, w, b, stride=1, groups=1, causal=False, left=None):
        return ops.conv_transpose1d(v, w, b, stride, groups, causal, left, self.recorder)

    def relu(self, x):
        return ops.relu(x, self.recorder)

    def prelu(self, x, slope):
        return ops.prelu(x, slope, self.recorder)

    def layer_norm(self, x, gain, shift):
        return ops.layer_norm(x, gain, shift, recorder=self.recorder)

    def global_layer_norm(self, x, gain, shift):
        return ops.global_layer_norm(x, gain, shift, recorder=self.recorder)

    def nearest_interp(self, x, factor, out_len):
        return ops.nearest_interp(x, factor, out_len, self.recorder)

    def softmax_sources(self, z):
        return ops.softmax_over_sources(z, self.recorder)

    def multiply(self, a, b):
        return ops.multiply(a, b, self.recorder)

    def add(self, a, b):
        return ops.add(a, b, self.recorder)

    def group_shared_linear(self, x, w, b, groups):
        return ops.group_shared_linear(x, w, b, groups, self.recorder)

    def group_attention(self, x, wq, wk, wv, groups):
        return ops.group_attention(x, wq, wk, wv, groups, self.recorder)

    def stack(self, items):
        return np.stack(items, axis=0)

    def pick(self, z, j):
        return np.ascontiguousarray(z[j])

    def length(self, x) -> int:
        return x.shape[1]


# ---------------------------------------------------------------------------
# forward stages (backend-generic: values are arrays or tape nodes)
# ---------------------------------------------------------------------------


def _pointwise(be, cfg: ModelConfig, P, prefix: str, x):
    """Framewise linear stage; the GC variant shares one per-group map and
    recombines groups through self-attention."""
    if cfg.grouped_pointwise:
        y = be.group_shared_linear(x, P[f"{prefix}.shared.weight"],
                                   P[f"{prefix}.shared.bias"], cfg.gc_groups)
        return be.group_attention(y, P[f"{prefix}.attn.wq"], P[f"{prefix}.attn.wk"],
                                  P[f"{prefix}.attn.wv"], cfg.gc_groups)
    return be.conv1d(x, P[f"{prefix}.weight"], P[f"{prefix}.bias"])


def _norm(be, cfg: ModelConfig, P, prefix: str, x):
    if cfg.norm_kind == "ln":
        return be.layer_norm(x, P[f"{prefix}.gain"], P[f"{prefix}.shift"])
    if cfg.norm_kind == "gln":
        return be.global_layer_norm(x, P[f"{prefix}.gain"], P[f"{prefix}.shift"])
    return x


def _act(be, cfg: ModelConfig, P, prefix: str, x):
    return be.prelu(x, P[f"{prefix}.slope"])


def encode(be, cfg: ModelConfig, P, x1):
    """Strided conv over the waveform, rectified to a nonnegative latent."""
    v = be.conv1d(x1, P["encoder.weight"], P["encoder.bias"],
                  cfg.enc_stride, 1, cfg.is_causal)
    return be.relu(v)


def uconv_block(be, cfg: ModelConfig, P, idx: int, x):
    """Expand, downsample through Q depthwise strides, fuse the scales back
    additively with nearest-neighbor upsampling, contract, residual out."""
    p = f"block{idx}"
    h = _pointwise(be, cfg, P, f"{p}.expand", x)
    h = _norm(be, cfg, P, f"{p}.expand.norm", h)
    h = _act(be, cfg, P, f"{p}.expand.act", h)

    scales = []
    cur = h
    for q in range(cfg.resampling_depth + 1):
        stride = 1 if q == 0 else cfg.resampling_stride
        cur = be.conv1d(cur, P[f"{p}.dw{q}.weight"], P[f"{p}.dw{q}.bias"],
                        stride, cfg.hidden_channels, cfg.is_causal)
        cur = _norm(be, cfg, P, f"{p}.dw{q}.norm", cur)
        cur = _act(be, cfg, P, f"{p}.dw{q}.act", cur)
        scales.append(cur)

    fused = scales[-1]
    for q in range(cfg.resampling_depth - 1, -1, -1):
        up = be.nearest_interp(fused, cfg.resampling_stride, be.length(scales[q]))
        fused = be.add(up, scales[q])
    f = _act(be, cfg, P, f"{p}.fuse.act", _norm(be, cfg, P, f"{p}.fuse.norm", fused))

    c = _norm(be, cfg, P, f"{p}.contract.norm", _pointwise(be, cfg, P, f"{p}.contract", f))
    return _act(be, cfg, P, f"{p}.out.act", be.add(c, x))


def separator(be, cfg: ModelConfig, P, vx):
    """Bottleneck projection, the block stack, and per-source latent heads."""
    y = _norm(be, cfg, P, "bottleneck.norm", vx)
    y = _pointwise(be, cfg, P, "bottleneck.proj", y)
    for b in range(cfg.num_blocks):
        y = uconv_block(be, cfg, P, b, y)
    return [_pointwise(be, cfg, P, f"head{j}", y) for j in range(cfg.n_sources)]


def apply_masks(be, cfg: ModelConfig, P, vx, latents):
    """Base variant: gate the encoded mixture with a source-simplex softmax,
    so the masked latents sum back to the mixture latent exactly."""
    masks = be.softmax_sources(be.stack(latents))
    return [be.multiply(be.pick(masks, j), vx) for j in range(cfg.n_sources)]


def decode(be, cfg: ModelConfig, P, latents):
    # the causal decoder emits forward only (frame l writes samples >= l*stride)
    left = 0 if cfg.is_causal else None
    outs = []
    for j, v in enumerate(latents):
        prefix = "decoder" if cfg.shared_decoder else f"decoder{j}"
        outs.append(be.conv_transpose1d(v, P[f"{prefix}.weight"], P[f"{prefix}.bias"],
                                        cfg.enc_stride, 1, cfg.is_causal, left))
    return outs


def forward(be, cfg: ModelConfig, P, x1):
    """Full per-variant pipeline; returns N decoded waveforms [1, L*stride]."""
    t = be.length(x1)
    if t < cfg.enc_kernel:
        raise ValidationError(
            f"input of {t} samples is shorter than one encoder frame ({cfg.enc_kernel})")
    frames = t // cfg.enc_stride
    min_frames = cfg.resampling_stride ** cfg.resampling_depth
    if frames < min_frames:
        raise ValidationError(
            f"input yields {frames} frames but {min_frames} are needed to survive "
            f"{cfg.resampling_depth} downsamplings")
    vx = encode(be, cfg, P, x1)
    latents = separator(be, cfg, P, vx)
    if cfg.uses_masks:
        latents = apply_masks(be, cfg, P, vx, latents)
    return decode(be, cfg, P, latents)


# ---------------------------------------------------------------------------
# eager entry points
# ---------------------------------------------------------------------------


def _as_row(mixture: Array) -> Array:
    x = np.asarray(mixture)
    if x.ndim == 2 and x.shape[0] == 1:
        x = x[0]
    if x.ndim != 1:
        raise ValidationError("mixture must be a single-channel waveform")
    if not np.isfinite(x).all():
        raise ValidationError("mixture contains non-finite samples")
    return x.reshape(1, -1)


def forward_array(cfg: ModelConfig, params: dict[str, Array], mixture: Array,
                  recorder: ops.FlopRecorder | None = None) -> Array:
    """Run the model on a raw waveform; returns estimates [N, floor(T/stride)*stride]."""
    x1 = _as_row(mixture)
    outs = forward(EagerOps(recorder), cfg, params, x1)
    return np.concatenate(outs, axis=0)


def separate_clip(cfg: ModelConfig, params: dict[str, Array],
                  mixture: Array) -> Array:
    """Inference pipeline for arbitrary-length clips.

    The clip is standardized, zero-padded on the right to the hop alignment
    (stride times the total downsampling factor), separated, trimmed back to
    the input length, and rescaled by the clip's standard deviation so the
    outputs sit at the input's level.
    """
    x = _as_row(mixture)[0]
    t = x.shape[0]
    scaled, _, std = ops.standardize(x.astype(np.float32, copy=False))
    pad = (-t) % cfg.hop_alignment
    while t + pad < cfg.enc_kernel:
        pad += cfg.hop_alignment
    if pad:
        scaled = np.pad(scaled, (0, pad))
    est = forward_array(cfg, params, scaled)
    return (est[:, :t] * std).astype(np.float32, copy=False)
