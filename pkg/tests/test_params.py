"""Parameter catalog: shapes, counts, init statistics, validation."""

import numpy as np
import pytest

from conftest import tiny_config

from sudormrf.config import ModelConfig, preset
from sudormrf.errors import ValidationError
from sudormrf.params import (ROLE_BIAS, ROLE_GAIN, ROLE_SHIFT, ROLE_SLOPE,
                             ROLE_WEIGHT, init_params, param_spec,
                             params_element_total, validate_params)


def spec_total(cfg) -> int:
    return sum(int(np.prod(info.shape)) for info in param_spec(cfg).values())

# Frozen totals, independently derived from the layer algebra; they also
# track the published model sizes (see the acceptance suite for tolerances).
FROZEN_TOTALS = {
    "base-2.0x": 5_217_409,
    "base-1.0x": 2_686_081,
    "base-0.5x": 1_420_417,
    "base-0.25x": 787_585,
    "plusplus-1.0x": 2_626_817,
    "plusplus-gc-1.0x": 452_585,
    "causal-plusplus-0.5x": 2_765_633,
    "causal-plusplus-0.25x": 1_591_073,
}


@pytest.mark.parametrize("name,total", sorted(FROZEN_TOTALS.items()))
def test_preset_totals_frozen(name, total):
    assert spec_total(preset(name)) == total


def test_single_block_cost_at_defaults():
    # one extra U-ConvBlock at 1.0x defaults costs exactly 158,208 parameters
    one = spec_total(ModelConfig(variant="base", n_sources=1, num_blocks=1))
    two = spec_total(ModelConfig(variant="base", n_sources=1, num_blocks=2))
    assert two - one == 158_208


def test_spec_covers_expected_layers():
    cfg = tiny_config("base")
    spec = param_spec(cfg)
    assert "encoder.weight" in spec and "encoder.bias" in spec
    assert "bottleneck.norm.gain" in spec
    assert "block0.dw0.weight" in spec
    assert f"block0.dw{cfg.resampling_depth}.weight" in spec
    assert "block1.contract.weight" in spec
    # base: one decoder per source, per-channel slopes
    assert "decoder0.weight" in spec and "decoder1.weight" in spec
    assert spec["block0.expand.act.slope"].shape == (cfg.hidden_channels,)

    causal = tiny_config("causal_plusplus")
    cspec = param_spec(causal)
    assert "decoder.weight" in cspec                 # shared decoder
    assert not any(".norm." in name for name in cspec)   # no norms at all
    assert cspec["block0.expand.act.slope"].shape == (1,)  # shared slope


def test_grouped_variant_swaps_pointwise_layout():
    cfg = tiny_config("plusplus_gc")
    spec = param_spec(cfg)
    assert "block0.expand.shared.weight" in spec
    assert "block0.expand.attn.wq" in spec
    assert "block0.expand.weight" not in spec
    w = spec["block0.expand.shared.weight"]
    assert w.shape == (cfg.hidden_channels // cfg.gc_groups,
                       cfg.block_channels // cfg.gc_groups)


def test_init_statistics():
    cfg = tiny_config("base")
    params = init_params(cfg, seed=0)
    spec = param_spec(cfg)
    for name, info in spec.items():
        p = params[name]
        assert p.shape == info.shape
        assert p.dtype == np.float32
        if info.role == ROLE_BIAS or info.role == ROLE_SHIFT:
            np.testing.assert_array_equal(p, np.zeros(info.shape))
        elif info.role == ROLE_GAIN:
            np.testing.assert_array_equal(p, np.ones(info.shape))
        elif info.role == ROLE_SLOPE:
            np.testing.assert_array_equal(p, np.full(info.shape, 0.25))
        elif info.role == ROLE_WEIGHT:
            bound = 1.0 / np.sqrt(info.fan_in)
            assert np.abs(p).max() <= bound
            assert p.std() > 0.1 * bound         # actually randomized


def test_init_deterministic_and_seed_sensitive():
    cfg = tiny_config("plusplus")
    a = init_params(cfg, seed=5)
    b = init_params(cfg, seed=5)
    c = init_params(cfg, seed=6)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_validate_params_messages():
    cfg = tiny_config("plusplus")
    params = init_params(cfg, seed=0)
    validate_params(cfg, params)             # clean pass

    missing = dict(params)
    missing.pop("encoder.bias")
    with pytest.raises(ValidationError, match="encoder.bias"):
        validate_params(cfg, missing)

    extra = dict(params)
    extra["mystery"] = np.zeros(3, dtype=np.float32)
    with pytest.raises(ValidationError, match="mystery"):
        validate_params(cfg, extra)

    bad = dict(params)
    bad["decoder.weight"] = bad["decoder.weight"][:, :, :-1].copy()
    with pytest.raises(ValidationError, match="decoder.weight"):
        validate_params(cfg, bad)


def test_params_element_total_counts_values():
    cfg = tiny_config("plusplus")
    params = init_params(cfg, seed=0)
    assert params_element_total(params) == spec_total(cfg)
