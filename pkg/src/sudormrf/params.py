"""Parameter naming, shapes, and initialization.

``param_spec`` is the single source of truth for the parameter set of a
configuration: the forward pass fetches tensors by these names, the cost
model sums these shapes, and the weight file format validates against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import ValidationError

Array = np.ndarray

# roles drive initialization: uniform fan-in scaling for weights,
# zeros/ones for biases and norm affines, 0.25 for PReLU slopes
ROLE_WEIGHT = "weight"
ROLE_BIAS = "bias"
ROLE_GAIN = "gain"
ROLE_SHIFT = "shift"
ROLE_SLOPE = "slope"
ROLE_ATTN_VALUE = "attn_value"   # zero-init so attention starts as identity


@dataclass(frozen=True)
class ParamInfo:
    shape: tuple[int, ...]
    role: str
    fan_in: int = 0


def _pointwise(spec: dict[str, ParamInfo], cfg: ModelConfig, prefix: str,
               c_in: int, c_out: int) -> None:
    """A framewise linear stage: dense conv, or shared-group map + attention."""
    if cfg.grouped_pointwise:
        g = cfg.gc_groups
        w_in, w_out = c_in // g, c_out // g
        spec[f"{prefix}.shared.weight"] = ParamInfo((w_out, w_in), ROLE_WEIGHT, w_in)
        spec[f"{prefix}.shared.bias"] = ParamInfo((w_out,), ROLE_BIAS)
        spec[f"{prefix}.attn.wq"] = ParamInfo((w_out, w_out), ROLE_WEIGHT, w_out)
        spec[f"{prefix}.attn.wk"] = ParamInfo((w_out, w_out), ROLE_WEIGHT, w_out)
        spec[f"{prefix}.attn.wv"] = ParamInfo((w_out, w_out), ROLE_ATTN_VALUE, w_out)
    else:
        spec[f"{prefix}.weight"] = ParamInfo((c_out, c_in, 1), ROLE_WEIGHT, c_in)
        spec[f"{prefix}.bias"] = ParamInfo((c_out,), ROLE_BIAS)


def _norm(spec: dict[str, ParamInfo], cfg: ModelConfig, prefix: str,
          channels: int) -> None:
    if cfg.norm_kind == "none":
        return
    spec[f"{prefix}.gain"] = ParamInfo((channels,), ROLE_GAIN)
    spec[f"{prefix}.shift"] = ParamInfo((channels,), ROLE_SHIFT)


def _slope(spec: dict[str, ParamInfo], cfg: ModelConfig, prefix: str,
           channels: int) -> None:
    n = 1 if cfg.shared_prelu else channels
    spec[f"{prefix}.slope"] = ParamInfo((n,), ROLE_SLOPE)


def param_spec(cfg: ModelConfig) -> dict[str, ParamInfo]:
    """Ordered name -> (shape, role) map for every trainable tensor."""
    spec: dict[str, ParamInfo] = {}
    ce, ke = cfg.enc_channels, cfg.enc_kernel
    co, ci = cfg.block_channels, cfg.hidden_channels

    spec["encoder.weight"] = ParamInfo((ce, 1, ke), ROLE_WEIGHT, ke)
    spec["encoder.bias"] = ParamInfo((ce,), ROLE_BIAS)

    _norm(spec, cfg, "bottleneck.norm", ce)
    _pointwise(spec, cfg, "bottleneck.proj", ce, co)

    for b in range(cfg.num_blocks):
        p = f"block{b}"
        _pointwise(spec, cfg, f"{p}.expand", co, ci)
        _norm(spec, cfg, f"{p}.expand.norm", ci)
        _slope(spec, cfg, f"{p}.expand.act", ci)
        for q in range(cfg.resampling_depth + 1):
            spec[f"{p}.dw{q}.weight"] = ParamInfo((ci, 1, cfg.dw_kernel),
                                                  ROLE_WEIGHT, cfg.dw_kernel)
            spec[f"{p}.dw{q}.bias"] = ParamInfo((ci,), ROLE_BIAS)
            _norm(spec, cfg, f"{p}.dw{q}.norm", ci)
            _slope(spec, cfg, f"{p}.dw{q}.act", ci)
        _norm(spec, cfg, f"{p}.fuse.norm", ci)
        _slope(spec, cfg, f"{p}.fuse.act", ci)
        _pointwise(spec, cfg, f"{p}.contract", ci, co)
        _norm(spec, cfg, f"{p}.contract.norm", co)
        _slope(spec, cfg, f"{p}.out.act", co)

    for j in range(cfg.n_sources):
        _pointwise(spec, cfg, f"head{j}", co, ce)

    if cfg.shared_decoder:
        spec["decoder.weight"] = ParamInfo((ce, 1, ke), ROLE_WEIGHT, ke)
        spec["decoder.bias"] = ParamInfo((1,), ROLE_BIAS)
    else:
        for j in range(cfg.n_sources):
            spec[f"decoder{j}.weight"] = ParamInfo((ce, 1, ke), ROLE_WEIGHT, ke)
            spec[f"decoder{j}.bias"] = ParamInfo((1,), ROLE_BIAS)
    return spec


def init_params(cfg: ModelConfig, seed: int = 0,
                dtype: type = np.float32) -> dict[str, Array]:
    """Fan-in-scaled uniform weights, zero biases/shifts, unit gains,
    PReLU slopes 0.25, and zero attention value projections."""
    rng = np.random.default_rng(seed)
    params: dict[str, Array] = {}
    for name, info in param_spec(cfg).items():
        if info.role == ROLE_WEIGHT:
            bound = 1.0 / math.sqrt(max(info.fan_in, 1))
            arr = rng.uniform(-bound, bound, size=info.shape)
        elif info.role == ROLE_GAIN:
            arr = np.ones(info.shape)
        elif info.role == ROLE_SLOPE:
            arr = np.full(info.shape, 0.25)
        else:  # bias, shift, attention value projection
            arr = np.zeros(info.shape)
        params[name] = arr.astype(dtype)
    return params


def params_element_total(params: dict[str, Array]) -> int:
    return sum(int(np.prod(p.shape)) for p in params.values())


def validate_params(cfg: ModelConfig, params: dict[str, Array]) -> None:
    """Check a loaded parameter dict against the config's expected spec."""
    spec = param_spec(cfg)
    missing = [n for n in spec if n not in params]
    extra = [n for n in params if n not in spec]
    if missing:
        raise ValidationError(f"missing parameter tensors: {missing[:5]}"
                              + ("..." if len(missing) > 5 else ""))
    if extra:
        raise ValidationError(f"unexpected parameter tensors: {extra[:5]}"
                              + ("..." if len(extra) > 5 else ""))
    for name, info in spec.items():
        got = tuple(params[name].shape)
        if got != info.shape:
            raise ValidationError(
                f"parameter {name!r} has shape {got}, expected {info.shape}")
