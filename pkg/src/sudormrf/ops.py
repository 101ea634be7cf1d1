"""Numerical kernels for the separation engine.

Every kernel is a pure function over numpy arrays with an explicit,
hand-written vector-Jacobian product (``*_vjp``).  Nothing here depends on
an autodiff framework; the gradients themselves are part of the artifact
and are validated against finite differences in the test suite.

Conventions
-----------
* Tensors are dense real arrays of rank <= 3.  Single-clip layout is
  ``[channels, length]``; waveforms are ``[length]`` or ``[1, length]``.
* All kernels run in float32 by default and in float64 when handed
  float64 inputs (used by the gradient checks).
* Convolution geometry: output length is ``floor(L / stride)`` for both
  padding modes.  Non-causal convs zero-pad symmetrically with
  ``(K - 1) // 2`` on the left; causal convs zero-pad ``K - 1`` on the
  left only, so output frame ``l`` depends on inputs up to ``stride*l``.
* Accumulation over kernel taps runs in increasing tap order in every
  path (dense, grouped, depthwise, transposed), which keeps results
  reproducible and lets the grouped and per-channel routes agree
  bit-for-bit.
* FLOP accounting: one multiply-accumulate counts as 2 FLOPs; bias adds,
  normalization, activations, and other elementwise work are counted.
  The same closed-form ``flops_*`` helpers drive both the runtime
  recorder and the analytic cost model, so the two totals match exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericalError, ValidationError

Array = np.ndarray


class FlopRecorder:
    """Accumulates FLOP and MAC counts per kernel name."""

    def __init__(self) -> None:
        self.flops_by_op: dict[str, int] = {}
        self.macs_total: int = 0

    def add(self, op: str, flops: int, macs: int = 0) -> None:
        self.flops_by_op[op] = self.flops_by_op.get(op, 0) + int(flops)
        self.macs_total += int(macs)

    @property
    def flops_total(self) -> int:
        return sum(self.flops_by_op.values())


def _require_finite(op: str, out: Array) -> None:
    if not np.isfinite(out).all():
        raise NumericalError(f"{op} produced non-finite values")


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------


def conv_out_len(length: int, stride: int) -> int:
    return length // stride


def conv_left_pad(kernel: int, causal: bool) -> int:
    return kernel - 1 if causal else (kernel - 1) // 2


def _padded(x: Array, kernel: int, stride: int, left: int) -> tuple[Array, int]:
    """Zero-pad so that every output frame window is in bounds."""
    length = x.shape[1]
    l_out = conv_out_len(length, stride)
    need = stride * (l_out - 1) + kernel
    right = max(0, need - left - length)
    if left == 0 and right == 0:
        return x, l_out
    return np.pad(x, ((0, 0), (left, right))), l_out


# ---------------------------------------------------------------------------
# FLOP formulas (shared by kernels and the analytic cost model)
# ---------------------------------------------------------------------------


def flops_conv1d(c_out: int, c_in_per_group: int, kernel: int, l_out: int,
                 groups: int = 1) -> tuple[int, int]:
    macs = c_out * c_in_per_group * kernel * l_out
    return 2 * macs + c_out * l_out, macs


def flops_conv_transpose1d(c_lat: int, c_out_per_group: int, kernel: int,
                           l_in: int, stride: int,
                           groups: int = 1) -> tuple[int, int]:
    macs = c_lat * c_out_per_group * kernel * l_in
    bias_adds = c_out_per_group * groups * l_in * stride
    return 2 * macs + bias_adds, macs


def flops_prelu(n_elements: int) -> tuple[int, int]:
    # split, slope multiply, recombine
    return 3 * n_elements, 0


def flops_relu(n_elements: int) -> tuple[int, int]:
    return n_elements, 0


def flops_elementwise(n_elements: int) -> tuple[int, int]:
    return n_elements, 0


def flops_layer_norm(channels: int, length: int) -> tuple[int, int]:
    # mean, center, square+accumulate, scale, affine; rsqrt per channel
    return 7 * channels * length + 2 * channels, 0


def flops_global_layer_norm(channels: int, length: int) -> tuple[int, int]:
    return 7 * channels * length + 2, 0


def flops_softmax_sources(n_sources: int, channels: int, length: int) -> tuple[int, int]:
    per_elt = 3 * n_sources * channels * length          # shift, exp, divide
    reduces = 2 * (n_sources - 1) * channels * length    # max and sum trees
    return per_elt + reduces, 0


def flops_nearest_interp(n_elements: int) -> tuple[int, int]:
    # pure gather, no arithmetic
    return 0, 0


def flops_group_shared_linear(groups: int, w_out: int, w_in: int,
                              length: int) -> tuple[int, int]:
    macs = groups * w_out * w_in * length
    return 2 * macs + groups * w_out * length, macs


def flops_group_attention(groups: int, width: int, length: int) -> tuple[int, int]:
    proj_macs = 3 * groups * width * width * length
    score_macs = 2 * groups * groups * width * length
    macs = proj_macs + score_macs
    scale = groups * groups * length
    softmax = (3 * groups + 2 * (groups - 1)) * groups * length
    residual = groups * width * length
    return 2 * macs + scale + softmax + residual, macs


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _check_conv_args(x: Array, weight: Array, bias: Array | None,
                     groups: int) -> None:
    if x.ndim != 2 or weight.ndim != 3:
        raise ValidationError("conv1d expects x[C_in, L] and weight[C, C_in/groups, K]")
    c_out, c_in_pg, _ = weight.shape
    if c_out % groups or x.shape[0] != c_in_pg * groups:
        raise ValidationError(
            f"conv1d channel mismatch: x has {x.shape[0]} channels, "
            f"weight implies {c_in_pg * groups} with groups={groups}")
    if bias is not None and bias.shape != (c_out,):
        raise ValidationError(f"conv1d bias must have shape ({c_out},)")


def conv1d(x: Array, weight: Array, bias: Array | None = None, stride: int = 1,
           groups: int = 1, causal: bool = False,
           recorder: FlopRecorder | None = None) -> Array:
    """Cross-correlation along time with grouped channels.

    ``weight`` has shape ``[C, C_in/groups, K]``; output is
    ``[C, floor(L/stride)]``.
    """
    _check_conv_args(x, weight, bias, groups)
    c_out, c_in_pg, kernel = weight.shape
    left = conv_left_pad(kernel, causal)
    xp, l_out = _padded(x, kernel, stride, left)
    y = np.zeros((c_out, l_out), dtype=x.dtype)
    for k in range(kernel):
        xs = xp[:, k:k + stride * l_out:stride]
        if groups == 1:
            y += weight[:, :, k] @ xs
        elif c_in_pg == 1 and groups == x.shape[0]:
            y += weight[:, 0, k][:, None] * xs
        else:
            xg = xs.reshape(groups, c_in_pg, l_out)
            wg = weight[:, :, k].reshape(groups, c_out // groups, c_in_pg)
            y += np.matmul(wg, xg).reshape(c_out, l_out)
    if bias is not None:
        y += bias[:, None]
    if recorder is not None:
        recorder.add("conv1d", *flops_conv1d(c_out, c_in_pg, kernel, l_out, groups))
    _require_finite("conv1d", y)
    return y


def conv1d_vjp(upstream: Array, x: Array, weight: Array, stride: int = 1,
               groups: int = 1, causal: bool = False) -> tuple[Array, Array, Array]:
    """Gradients of conv1d w.r.t. input, weight, and bias."""
    c_out, c_in_pg, kernel = weight.shape
    left = conv_left_pad(kernel, causal)
    xp, l_out = _padded(x, kernel, stride, left)
    if upstream.shape != (c_out, l_out):
        raise ValidationError("conv1d_vjp upstream shape mismatch")
    d_bias = upstream.sum(axis=1)
    d_weight = np.zeros_like(weight)
    d_xp = np.zeros_like(xp)
    for k in range(kernel):
        sl = slice(k, k + stride * l_out, stride)
        xs = xp[:, sl]
        if groups == 1:
            d_weight[:, :, k] = upstream @ xs.T
            d_xp[:, sl] += weight[:, :, k].T @ upstream
        elif c_in_pg == 1 and groups == x.shape[0]:
            d_weight[:, 0, k] = (upstream * xs).sum(axis=1)
            d_xp[:, sl] += weight[:, 0, k][:, None] * upstream
        else:
            ug = upstream.reshape(groups, c_out // groups, l_out)
            xg = xs.reshape(groups, c_in_pg, l_out)
            d_weight[:, :, k] = np.matmul(ug, xg.transpose(0, 2, 1)).reshape(c_out, c_in_pg)
            wg = weight[:, :, k].reshape(groups, c_out // groups, c_in_pg)
            d_xp[:, sl] += np.matmul(wg.transpose(0, 2, 1), ug).reshape(x.shape[0], l_out)
    d_x = d_xp[:, left:left + x.shape[1]]
    return np.ascontiguousarray(d_x), d_weight, d_bias


def conv_transpose1d(v: Array, weight: Array, out_bias: Array | None = None,
                     stride: int = 1, groups: int = 1, causal: bool = False,
                     left: int | None = None,
                     recorder: FlopRecorder | None = None) -> Array:
    """Adjoint of :func:`conv1d` for the same geometry, plus an output bias.

    ``v`` has shape ``[C, L]`` (the conv1d output side) and the result has
    shape ``[C_in, L*stride]`` (the conv1d input side).  ``left`` overrides
    the pad offset; ``left=0`` makes frame ``l`` write only samples
    ``>= stride*l``, which is the emission geometry the causal decoder uses.
    """
    if v.ndim != 2 or weight.ndim != 3:
        raise ValidationError("conv_transpose1d expects v[C, L] and weight[C, C_in/groups, K]")
    c_lat, l_in = v.shape
    if weight.shape[0] != c_lat:
        raise ValidationError("conv_transpose1d channel mismatch with weight")
    c_out_pg, kernel = weight.shape[1], weight.shape[2]
    c_out = c_out_pg * groups
    length = l_in * stride
    lam = conv_left_pad(kernel, causal) if left is None else left
    need = stride * (l_in - 1) + kernel
    right = max(0, need - lam - length)
    out_p = np.zeros((c_out, length + lam + right), dtype=v.dtype)
    for k in range(kernel):
        sl = slice(k, k + stride * l_in, stride)
        if groups == 1:
            out_p[:, sl] += weight[:, :, k].T @ v
        elif c_out_pg == 1 and groups == c_lat:
            out_p[:, sl] += weight[:, 0, k][:, None] * v
        else:
            vg = v.reshape(groups, c_lat // groups, l_in)
            wg = weight[:, :, k].reshape(groups, c_lat // groups, c_out_pg)
            out_p[:, sl] += np.matmul(wg.transpose(0, 2, 1), vg).reshape(c_out, l_in)
    out = np.ascontiguousarray(out_p[:, lam:lam + length])
    if out_bias is not None:
        if out_bias.shape != (c_out,):
            raise ValidationError(f"conv_transpose1d bias must have shape ({c_out},)")
        out += out_bias[:, None]
    if recorder is not None:
        recorder.add("conv_transpose1d",
                     *flops_conv_transpose1d(c_lat, c_out_pg, kernel, l_in, stride, groups))
    _require_finite("conv_transpose1d", out)
    return out


def conv_transpose1d_vjp(upstream: Array, v: Array, weight: Array,
                         stride: int = 1, groups: int = 1, causal: bool = False,
                         left: int | None = None) -> tuple[Array, Array, Array]:
    """Gradients of conv_transpose1d w.r.t. input frames, weight, and bias."""
    c_lat, l_in = v.shape
    c_out_pg, kernel = weight.shape[1], weight.shape[2]
    c_out = c_out_pg * groups
    lam = conv_left_pad(kernel, causal) if left is None else left
    need = stride * (l_in - 1) + kernel
    length = l_in * stride
    right = max(0, need - lam - length)
    up_p = np.pad(upstream, ((0, 0), (lam, right)))
    d_v = np.zeros_like(v)
    d_weight = np.zeros_like(weight)
    for k in range(kernel):
        us = up_p[:, k:k + stride * l_in:stride]
        if groups == 1:
            d_v += weight[:, :, k] @ us
            d_weight[:, :, k] = v @ us.T
        elif c_out_pg == 1 and groups == c_lat:
            d_v += weight[:, 0, k][:, None] * us
            d_weight[:, 0, k] = (v * us).sum(axis=1)
        else:
            ug = us.reshape(groups, c_out_pg, l_in)
            wg = weight[:, :, k].reshape(groups, c_lat // groups, c_out_pg)
            d_v += np.matmul(wg, ug).reshape(c_lat, l_in)
            vg = v.reshape(groups, c_lat // groups, l_in)
            d_weight[:, :, k] = np.matmul(vg, ug.transpose(0, 2, 1)).reshape(c_lat, c_out_pg)
    d_bias = upstream.sum(axis=1)
    return d_v, d_weight, d_bias


# ---------------------------------------------------------------------------
# activations and normalization
# ---------------------------------------------------------------------------


def relu(x: Array, recorder: FlopRecorder | None = None) -> Array:
    y = np.maximum(x, 0)
    if recorder is not None:
        recorder.add("relu", *flops_relu(x.size))
    return y


def relu_vjp(upstream: Array, x: Array) -> Array:
    return upstream * (x > 0)


def prelu(x: Array, slope: Array, recorder: FlopRecorder | None = None) -> Array:
    """max(0, x) + a * min(0, x) with a per-channel or single shared slope."""
    if slope.ndim != 1 or slope.shape[0] not in (1, x.shape[0]):
        raise ValidationError("prelu slope must have shape [C] or [1]")
    y = np.maximum(x, 0) + slope[:, None] * np.minimum(x, 0)
    if recorder is not None:
        recorder.add("prelu", *flops_prelu(x.size))
    _require_finite("prelu", y)
    return y


def prelu_vjp(upstream: Array, x: Array, slope: Array) -> tuple[Array, Array]:
    d_x = upstream * np.where(x > 0, x.dtype.type(1), slope[:, None])
    neg_term = upstream * np.minimum(x, 0)
    if slope.shape[0] == 1:
        d_slope = np.asarray([neg_term.sum()], dtype=slope.dtype)
    else:
        d_slope = neg_term.sum(axis=1)
    return d_x, d_slope


NORM_EPS = 1e-8


def layer_norm(x: Array, gain: Array, shift: Array, eps: float = NORM_EPS,
               recorder: FlopRecorder | None = None) -> Array:
    """Per-channel standardization over time, then a channelwise affine."""
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    xhat = xc / np.sqrt(var + eps)
    y = xhat * gain[:, None] + shift[:, None]
    if recorder is not None:
        recorder.add("layer_norm", *flops_layer_norm(*x.shape))
    _require_finite("layer_norm", y)
    return y


def layer_norm_vjp(upstream: Array, x: Array, gain: Array,
                   eps: float = NORM_EPS) -> tuple[Array, Array, Array]:
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    g = upstream * gain[:, None]
    d_x = inv * (g - g.mean(axis=1, keepdims=True)
                 - xhat * (g * xhat).mean(axis=1, keepdims=True))
    d_gain = (upstream * xhat).sum(axis=1)
    d_shift = upstream.sum(axis=1)
    return d_x, d_gain, d_shift


def global_layer_norm(x: Array, gain: Array, shift: Array, eps: float = NORM_EPS,
                      recorder: FlopRecorder | None = None) -> Array:
    """Standardization with moments pooled over channels and time."""
    mu = x.mean()
    xc = x - mu
    var = (xc * xc).mean()
    xhat = xc / math.sqrt(var + eps)
    y = xhat * gain[:, None] + shift[:, None]
    if recorder is not None:
        recorder.add("global_layer_norm", *flops_global_layer_norm(*x.shape))
    _require_finite("global_layer_norm", y)
    return y


def global_layer_norm_vjp(upstream: Array, x: Array, gain: Array,
                          eps: float = NORM_EPS) -> tuple[Array, Array, Array]:
    mu = x.mean()
    xc = x - mu
    var = (xc * xc).mean()
    inv = 1.0 / math.sqrt(var + eps)
    xhat = xc * inv
    g = upstream * gain[:, None]
    d_x = inv * (g - g.mean() - xhat * (g * xhat).mean())
    d_gain = (upstream * xhat).sum(axis=1)
    d_shift = upstream.sum(axis=1)
    return d_x, d_gain, d_shift


# ---------------------------------------------------------------------------
# resampling and masking
# ---------------------------------------------------------------------------


def nearest_interp(x: Array, factor: int, out_len: int | None = None,
                   recorder: FlopRecorder | None = None) -> Array:
    """Nearest-neighbor upsampling: output frame j copies input floor(j/factor).

    When ``out_len`` exceeds ``L*factor`` the final frame is repeated, which
    is how odd-length stages re-align during multi-scale fusion.
    """
    length = x.shape[1]
    t = length * factor if out_len is None else out_len
    idx = np.minimum(np.arange(t) // factor, length - 1)
    y = np.ascontiguousarray(x[:, idx])
    if recorder is not None:
        recorder.add("nearest_interp", *flops_nearest_interp(y.size))
    return y


def nearest_interp_vjp(upstream: Array, in_len: int, factor: int) -> Array:
    t = upstream.shape[1]
    idx = np.minimum(np.arange(t) // factor, in_len - 1)
    d_x = np.zeros((upstream.shape[0], in_len), dtype=upstream.dtype)
    np.add.at(d_x.T, idx, upstream.T)
    return d_x


def softmax_over_sources(z: Array, recorder: FlopRecorder | None = None) -> Array:
    """Softmax across the leading source axis of ``z[N, C, L]``."""
    if z.ndim != 3:
        raise ValidationError("softmax_over_sources expects z[N, C, L]")
    shifted = z - z.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    m = e / e.sum(axis=0, keepdims=True)
    if recorder is not None:
        recorder.add("softmax_over_sources", *flops_softmax_sources(*z.shape))
    _require_finite("softmax_over_sources", m)
    return m


def softmax_over_sources_vjp(upstream: Array, masks: Array) -> Array:
    inner = (upstream * masks).sum(axis=0, keepdims=True)
    return masks * (upstream - inner)


def multiply(a: Array, b: Array, recorder: FlopRecorder | None = None) -> Array:
    y = a * b
    if recorder is not None:
        recorder.add("multiply", *flops_elementwise(y.size))
    return y


def add(a: Array, b: Array, recorder: FlopRecorder | None = None) -> Array:
    y = a + b
    if recorder is not None:
        recorder.add("add", *flops_elementwise(y.size))
    return y


# ---------------------------------------------------------------------------
# grouped pointwise layers with parameter sharing
# ---------------------------------------------------------------------------


def group_shared_linear(x: Array, weight: Array, bias: Array, groups: int,
                        recorder: FlopRecorder | None = None) -> Array:
    """Framewise linear map applied independently to each channel group.

    The same ``[w_out, w_in]`` matrix is shared by every group, so the
    parameter count is the dense count divided by ``groups**2``.
    """
    c_in, length = x.shape
    if c_in % groups:
        raise ValidationError("group_shared_linear: channels not divisible by groups")
    w_out, w_in = weight.shape
    if w_in != c_in // groups:
        raise ValidationError("group_shared_linear: weight width mismatch")
    xg = x.reshape(groups, w_in, length)
    y = np.matmul(weight, xg) + bias[None, :, None]
    y = y.reshape(groups * w_out, length)
    if recorder is not None:
        recorder.add("group_shared_linear",
                     *flops_group_shared_linear(groups, w_out, w_in, length))
    _require_finite("group_shared_linear", y)
    return np.ascontiguousarray(y)


def group_shared_linear_vjp(upstream: Array, x: Array, weight: Array,
                            groups: int) -> tuple[Array, Array, Array]:
    c_in, length = x.shape
    w_out, w_in = weight.shape
    ug = upstream.reshape(groups, w_out, length)
    xg = x.reshape(groups, w_in, length)
    d_weight = np.einsum("gol,gwl->ow", ug, xg)
    d_x = np.matmul(weight.T, ug).reshape(c_in, length)
    d_bias = ug.sum(axis=(0, 2))
    return np.ascontiguousarray(d_x), d_weight, d_bias


def group_attention(x: Array, wq: Array, wk: Array, wv: Array, groups: int,
                    recorder: FlopRecorder | None = None) -> Array:
    """Single-head scaled dot-product attention over the group axis.

    At each time frame the ``groups`` channel groups attend to each other
    (queries, keys, and values all have the group width); the attended
    values are added back residually.  No positional encoding, so the layer
    is equivariant to group permutations.
    """
    c_in, length = x.shape
    width = c_in // groups
    if c_in % groups:
        raise ValidationError("group_attention: channels not divisible by groups")
    for name, w in (("wq", wq), ("wk", wk), ("wv", wv)):
        if w.shape != (width, width):
            raise ValidationError(f"group_attention: {name} must be [{width}, {width}]")
    xg = x.reshape(groups, width, length)
    q = np.einsum("uw,gwl->gul", wq, xg)
    k = np.einsum("uw,gwl->gul", wk, xg)
    v = np.einsum("uw,gwl->gul", wv, xg)
    scores = np.einsum("gul,hul->ghl", q, k) / math.sqrt(width)
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    attn = e / e.sum(axis=1, keepdims=True)
    out = xg + np.einsum("ghl,hul->gul", attn, v)
    y = np.ascontiguousarray(out.reshape(c_in, length))
    if recorder is not None:
        recorder.add("group_attention", *flops_group_attention(groups, width, length))
    _require_finite("group_attention", y)
    return y


def group_attention_vjp(upstream: Array, x: Array, wq: Array, wk: Array,
                        wv: Array, groups: int) -> tuple[Array, Array, Array, Array]:
    c_in, length = x.shape
    width = c_in // groups
    xg = x.reshape(groups, width, length)
    q = np.einsum("uw,gwl->gul", wq, xg)
    k = np.einsum("uw,gwl->gul", wk, xg)
    v = np.einsum("uw,gwl->gul", wv, xg)
    scale = 1.0 / math.sqrt(width)
    scores = np.einsum("gul,hul->ghl", q, k) * scale
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    attn = e / e.sum(axis=1, keepdims=True)

    ug = upstream.reshape(groups, width, length)
    d_x = ug.copy()                                   # residual path
    d_attn = np.einsum("gul,hul->ghl", ug, v)
    d_v = np.einsum("ghl,gul->hul", attn, ug)
    inner = (d_attn * attn).sum(axis=1, keepdims=True)
    d_scores = attn * (d_attn - inner) * scale
    d_q = np.einsum("ghl,hul->gul", d_scores, k)
    d_k = np.einsum("ghl,gul->hul", d_scores, q)
    d_x += np.einsum("uw,gul->gwl", wq, d_q)
    d_x += np.einsum("uw,gul->gwl", wk, d_k)
    d_x += np.einsum("uw,gul->gwl", wv, d_v)
    d_wq = np.einsum("gul,gwl->uw", d_q, xg)
    d_wk = np.einsum("gul,gwl->uw", d_k, xg)
    d_wv = np.einsum("gul,gwl->uw", d_v, xg)
    return np.ascontiguousarray(d_x.reshape(c_in, length)), d_wq, d_wk, d_wv


# ---------------------------------------------------------------------------
# clip utilities
# ---------------------------------------------------------------------------


def standardize(x: Array) -> tuple[Array, float, float]:
    """Zero-mean, unit-std scaling of a clip; returns (scaled, mean, std).

    Digital silence (std below 1e-12) is passed through centered with
    std treated as 1 so the pipeline stays finite.
    """
    mean = float(x.mean())
    std = float(x.std())
    safe = std if std > 1e-12 else 1.0
    return (x - mean) / safe, mean, safe
