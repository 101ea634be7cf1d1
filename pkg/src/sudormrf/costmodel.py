"""Execution-free cost accounting: parameters, FLOPs, memory, receptive field.

The FLOP enumeration walks the same op sequence as ``model.forward`` and
calls the same closed-form ``flops_*`` helpers the runtime recorder uses, so
the analytic total equals the instrumented total exactly.  The peak-memory
estimate follows that schedule with explicit liveness bookkeeping; a tensor
briefly counted both as the live chain value and as a retained operand makes
the estimate conservative.  Allocator overhead and transient workspace are
not modeled.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import model, ops, streaming
from .config import ModelConfig
from .errors import ValidationError
from .params import param_spec

PRECISION_BYTES = {"float32": 4, "float64": 8}


@dataclass(frozen=True)
class ParamCount:
    total: int
    by_layer: dict[str, int]


@dataclass(frozen=True)
class FlopCount:
    direction: str
    input_samples: int
    flops_total: int
    macs_total: int
    by_op: dict[str, int]


@dataclass(frozen=True)
class CostReport:
    config: ModelConfig
    input_samples: int
    precision: str
    params_total: int
    params_by_layer: dict[str, int]
    flops_forward: int
    flops_backward: int
    macs_forward: int
    peak_mem_forward: int
    peak_mem_backward: int
    receptive_field: int

    def to_kv(self) -> str:
        lines = [f"params_total={self.params_total}",
                 f"input_samples={self.input_samples}",
                 f"precision={self.precision}",
                 f"flops_forward={self.flops_forward}",
                 f"flops_backward={self.flops_backward}",
                 f"macs_forward={self.macs_forward}",
                 f"peak_mem_forward_bytes={self.peak_mem_forward}",
                 f"peak_mem_backward_bytes={self.peak_mem_backward}",
                 f"receptive_field_samples={self.receptive_field}"]
        for name, count in self.params_by_layer.items():
            lines.append(f"params.{name}={count}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        giga = 1e9
        lines = [
            f"variant             {self.config.variant}",
            f"input samples       {self.input_samples}",
            f"parameters          {self.params_total:,d}"
            f"  ({self.params_total / 1e6:.2f}M)",
            f"forward GFLOPs      {self.flops_forward / giga:.3f}",
            f"backward GFLOPs     {self.flops_backward / giga:.3f}",
            f"forward GMACs       {self.macs_forward / giga:.3f}",
            f"peak mem forward    {self.peak_mem_forward / 1e6:.1f} MB"
            f" ({self.precision})",
            f"peak mem backward   {self.peak_mem_backward / 1e6:.1f} MB",
            f"receptive field     {self.receptive_field} samples",
        ]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def count_params(cfg: ModelConfig) -> ParamCount:
    """Exact trainable-element counts, grouped by top-level layer name."""
    by_layer: dict[str, int] = {}
    total = 0
    for name, info in param_spec(cfg).items():
        n = 1
        for d in info.shape:
            n *= d
        layer = name.split(".")[0]
        by_layer[layer] = by_layer.get(layer, 0) + n
        total += n
    return ParamCount(total=total, by_layer=by_layer)


# ---------------------------------------------------------------------------
# FLOPs and activation schedule
# ---------------------------------------------------------------------------


def _forward_schedule(cfg: ModelConfig, t: int):
    """Yield (op, flops, macs, out_elems, retained_delta) per forward op.

    Mirrors ``model.forward`` exactly; ``retained_delta`` adjusts the set of
    tensors that stay live past the op (residual inputs, fusion operands,
    the encoded mixture held for masking).
    """
    s_e, k_e = cfg.enc_stride, cfg.enc_kernel
    ce, co, ci = cfg.enc_channels, cfg.block_channels, cfg.hidden_channels
    n, s = cfg.n_sources, cfg.resampling_stride
    length = t // s_e

    def pointwise(c_from, c_to, l, keep_after=0):
        if cfg.grouped_pointwise:
            g = cfg.gc_groups
            f, m = ops.flops_group_shared_linear(g, c_to // g, c_from // g, l)
            yield ("group_shared_linear", f, m, c_to * l, 0)
            f, m = ops.flops_group_attention(g, c_to // g, l)
            yield ("group_attention", f, m, c_to * l, keep_after)
        else:
            f, m = ops.flops_conv1d(c_to, c_from, 1, l)
            yield ("conv1d", f, m, c_to * l, keep_after)

    def norm(c, l, keep_after=0):
        if cfg.norm_kind == "ln":
            f, m = ops.flops_layer_norm(c, l)
            yield ("layer_norm", f, m, c * l, keep_after)
        elif cfg.norm_kind == "gln":
            f, m = ops.flops_global_layer_norm(c, l)
            yield ("global_layer_norm", f, m, c * l, keep_after)

    def prelu(c, l, keep_after=0):
        f, m = ops.flops_prelu(c * l)
        yield ("prelu", f, m, c * l, keep_after)

    # encoder; the rectified latent is retained for masking in the base variant
    f, m = ops.flops_conv1d(ce, 1, k_e, length)
    yield ("conv1d", f, m, ce * length, 0)
    f, m = ops.flops_relu(ce * length)
    yield ("relu", f, m, ce * length, ce * length if cfg.uses_masks else 0)

    yield from norm(ce, length)
    yield from pointwise(ce, co, length)

    for _ in range(cfg.num_blocks):
        # the block input stays live for the residual connection
        yield from pointwise(co, ci, length, keep_after=co * length)
        yield from norm(ci, length)
        yield from prelu(ci, length)
        lengths = []
        cur = length
        for q in range(cfg.resampling_depth + 1):
            cur = cur // (1 if q == 0 else s)
            lengths.append(cur)
            f, m = ops.flops_conv1d(ci, 1, cfg.dw_kernel, cur, ci)
            yield ("conv1d", f, m, ci * cur, 0)
            yield from norm(ci, cur)
            # every scale except the deepest is retained for fusion
            keep = ci * cur if q < cfg.resampling_depth else 0
            yield from prelu(ci, cur, keep_after=keep)
        for q in range(cfg.resampling_depth - 1, -1, -1):
            l_q = lengths[q]
            yield ("nearest_interp", 0, 0, ci * l_q, 0)
            f, m = ops.flops_elementwise(ci * l_q)
            yield ("add", f, m, ci * l_q, -(ci * l_q))   # fusion operand consumed
        yield from norm(ci, length)
        yield from prelu(ci, length)
        yield from pointwise(ci, co, length)
        yield from norm(co, length)
        f, m = ops.flops_elementwise(co * length)
        yield ("add", f, m, co * length, -(co * length))  # residual consumed
        yield from prelu(co, length)

    for j in range(n):
        # the block-stack output feeds every head; latents pile up until decode
        delta = (co * length if j == 0 else 0) + ce * length
        if j == n - 1:
            delta -= co * length
        yield from pointwise(co, ce, length, keep_after=delta)

    if cfg.uses_masks:
        f, m = ops.flops_softmax_sources(n, ce, length)
        # the stacked latents are replaced by the mask tensor
        yield ("softmax_over_sources", f, m, n * ce * length, -(n * ce * length))
        for j in range(n):
            f, m = ops.flops_elementwise(ce * length)
            drop = ce * length if j == n - 1 else 0   # mixture latent released
            yield ("multiply", f, m, ce * length, ce * length - drop)

    for _j in range(n):
        f, m = ops.flops_conv_transpose1d(ce, 1, k_e, length, s_e)
        yield ("conv_transpose1d", f, m, length * s_e, -(ce * length))


_CONV_OPS = ("conv1d", "conv_transpose1d", "group_shared_linear", "group_attention")


def count_flops(cfg: ModelConfig, t: int, direction: str = "forward") -> FlopCount:
    """Closed-form FLOPs at input length ``t``.

    Backward is accounted as one forward plus twice the forward cost of every
    MAC-bearing op (each needs an input-gradient and a weight-gradient pass
    of the same arithmetic shape).
    """
    if direction not in ("forward", "backward"):
        raise ValidationError(f"unknown direction {direction!r}")
    if t < cfg.enc_kernel:
        raise ValidationError("input shorter than one encoder frame")
    by_op: dict[str, int] = {}
    macs = 0
    for op, flops, op_macs, _, _ in _forward_schedule(cfg, t):
        by_op[op] = by_op.get(op, 0) + flops
        macs += op_macs
    total = sum(by_op.values())
    if direction == "backward":
        conv_part = sum(by_op.get(op, 0) for op in _CONV_OPS)
        total += 2 * conv_part
    return FlopCount(direction=direction, input_samples=t, flops_total=total,
                     macs_total=macs, by_op=by_op)


def estimate_peak_memory(cfg: ModelConfig, t: int, direction: str = "forward",
                         precision: str = "float32") -> int:
    """Bytes held at the worst point of the schedule.

    Forward: parameters plus the largest set of simultaneously live
    activations.  Backward: parameters, their gradients, and every retained
    forward activation (reverse-mode keeps them all).
    """
    if precision not in PRECISION_BYTES:
        raise ValidationError(f"unknown precision {precision!r}")
    unit = PRECISION_BYTES[precision]
    params_bytes = count_params(cfg).total * unit
    if direction == "backward":
        acts = sum(out for _, _, _, out, _ in _forward_schedule(cfg, t))
        return 2 * params_bytes + acts * unit
    if direction != "forward":
        raise ValidationError(f"unknown direction {direction!r}")
    peak = 0
    retained = 0
    prev_out = t  # the input waveform itself
    for _, _, _, out, delta in _forward_schedule(cfg, t):
        live = retained + prev_out + out
        peak = max(peak, live)
        retained += delta
        prev_out = out
    return params_bytes + peak * unit


# ---------------------------------------------------------------------------
# receptive field
# ---------------------------------------------------------------------------


def dependency_interval(cfg: ModelConfig, t_out: int) -> tuple[int, int]:
    """Inclusive input-sample interval that can influence output sample
    ``t_out``, from exact index propagation through the conv graph.

    Normalization layers couple all frames and are deliberately excluded:
    the value characterizes the convolutional structure (and is exact for
    the norm-free causal variant).
    """
    k_e, s_e = cfg.enc_kernel, cfg.enc_stride
    k, s, q_depth = cfg.dw_kernel, cfg.resampling_stride, cfg.resampling_depth
    causal = cfg.is_causal
    lam = 0 if causal else (k_e - 1) // 2
    p = k - 1 if causal else (k - 1) // 2

    # decoder: frames whose emission window covers t_out
    lo = -((-(t_out - k_e + 1 + lam)) // s_e)   # ceil division
    hi = (t_out + lam) // s_e

    for _ in range(cfg.num_blocks):
        block_lo, block_hi = lo, hi
        m_lo, m_hi = lo, hi
        for q in range(q_depth + 1):
            if q > 0:               # nearest-interp indexing, floor division
                m_lo, m_hi = m_lo // s, m_hi // s
            # back through the downsample chain to full rate
            n_lo, n_hi = m_lo, m_hi
            for _r in range(q, 0, -1):
                n_lo = n_lo * s - p
                n_hi = n_hi * s + (k - 1 - p)
            n_lo -= p               # the stride-1 conv at full rate
            n_hi += k - 1 - p
            block_lo = min(block_lo, n_lo)
            block_hi = max(block_hi, n_hi)
        lo, hi = block_lo, block_hi

    # encoder frames back to samples
    enc_p = k_e - 1 if causal else (k_e - 1) // 2
    return lo * s_e - enc_p, hi * s_e + (k_e - 1 - enc_p)


def receptive_field(cfg: ModelConfig) -> int:
    """Span in samples of the dependency interval of one output sample."""
    lo, hi = dependency_interval(cfg, 0)
    return hi - lo + 1


# ---------------------------------------------------------------------------
# latency measurement
# ---------------------------------------------------------------------------


def measure_latency(cfg: ModelConfig, params: dict[str, np.ndarray], t: int,
                    repeats: int = 5, hop: int | None = None) -> dict[str, float]:
    """Median/p95 wall time for batch forward and, on the causal variant,
    per-push streaming.  Real-time factors use the config's sample rate."""
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    rng = np.random.default_rng(0)
    x = rng.standard_normal(t).astype(np.float32)
    model.forward_array(cfg, params, x)  # warmup
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        model.forward_array(cfg, params, x)
        times.append(time.perf_counter() - t0)
    seconds_audio = t / cfg.sample_rate
    stats = {
        "input_samples": float(t),
        "forward_median_s": statistics.median(times),
        "forward_p95_s": float(np.percentile(times, 95)),
        "rtf_forward": statistics.median(times) / seconds_audio,
    }
    if cfg.is_causal:
        hop = hop or cfg.hop_alignment
        state = streaming.stream_init(cfg, params)
        streaming.stream_push(state, x[:hop])  # warmup the session
        push_times = []
        pos = hop
        while len(push_times) < max(repeats, 8):
            if pos + hop > t:
                pos = 0
                state = streaming.stream_init(cfg, params)
            t0 = time.perf_counter()
            streaming.stream_push(state, x[pos:pos + hop])
            push_times.append(time.perf_counter() - t0)
            pos += hop
        stats.update({
            "hop_samples": float(hop),
            "latency_samples": float(streaming.latency_samples(cfg, hop)),
            "push_median_s": statistics.median(push_times),
            "push_p95_s": float(np.percentile(push_times, 95)),
            "rtf_stream": statistics.median(push_times) / (hop / cfg.sample_rate),
        })
    return stats


def cost_report(cfg: ModelConfig, t: int, precision: str = "float32") -> CostReport:
    pc = count_params(cfg)
    fwd = count_flops(cfg, t, "forward")
    bwd = count_flops(cfg, t, "backward")
    return CostReport(
        config=cfg, input_samples=t, precision=precision,
        params_total=pc.total, params_by_layer=pc.by_layer,
        flops_forward=fwd.flops_total, flops_backward=bwd.flops_total,
        macs_forward=fwd.macs_total,
        peak_mem_forward=estimate_peak_memory(cfg, t, "forward", precision),
        peak_mem_backward=estimate_peak_memory(cfg, t, "backward", precision),
        receptive_field=receptive_field(cfg))
