"""Forward-pass semantics: shapes, variant structure, masking, padding."""

import numpy as np
import pytest
from conftest import tiny_config

from sudormrf import model, ops
from sudormrf.errors import ValidationError
from sudormrf.model import EagerOps, apply_masks, encode, separator
from sudormrf.params import init_params

VARIANTS = ("base", "plusplus", "plusplus_gc", "causal_plusplus")


@pytest.mark.parametrize("variant", VARIANTS)
def test_forward_shapes(variant, rng):
    cfg = tiny_config(variant)
    params = init_params(cfg, seed=1)
    for t in (160, 201, 333):
        x = rng.standard_normal(t).astype(np.float32)
        y = model.forward_array(cfg, params, x)
        assert y.shape == (cfg.n_sources, (t // cfg.enc_stride) * cfg.enc_stride)
        assert np.isfinite(y).all()


def test_forward_rejects_short_input(rng):
    cfg = tiny_config("plusplus")
    params = init_params(cfg, seed=0)
    with pytest.raises(ValidationError):
        model.forward_array(cfg, params, np.zeros(cfg.enc_kernel - 1))
    with pytest.raises(ValidationError):
        # enough for the encoder but not for Q downsamplings
        model.forward_array(cfg, params, np.zeros(30))
    with pytest.raises(ValidationError):
        model.forward_array(cfg, params, np.full(160, np.nan))
    with pytest.raises(ValidationError):
        model.forward_array(cfg, params, np.zeros((2, 160)))


def test_mask_completeness_property(rng):
    """Base variant: masked latents sum back to the encoded mixture."""
    cfg = tiny_config("base")
    params = init_params(cfg, seed=2)
    be = EagerOps()
    for trial in range(10):
        x = rng.standard_normal((1, 160)).astype(np.float64)
        vx = encode(be, cfg, params, x)
        latents = separator(be, cfg, params, vx)
        masked = apply_masks(be, cfg, params, vx, latents)
        total = np.sum(masked, axis=0)
        np.testing.assert_allclose(total, vx, atol=1e-5)


def test_encoder_output_nonnegative(rng):
    cfg = tiny_config("base")
    params = init_params(cfg, seed=0)
    vx = encode(EagerOps(), cfg, params, rng.standard_normal((1, 200)))
    assert (vx >= 0).all()


def test_variant_op_structure(rng):
    """The recorder exposes which kernels each variant actually runs."""
    x = rng.standard_normal(160).astype(np.float32)

    rec = ops.FlopRecorder()
    cfg = tiny_config("base")
    model.forward_array(cfg, init_params(cfg, seed=0), x, recorder=rec)
    assert "softmax_over_sources" in rec.flops_by_op
    assert "layer_norm" in rec.flops_by_op
    assert "global_layer_norm" not in rec.flops_by_op

    rec = ops.FlopRecorder()
    cfg = tiny_config("plusplus")
    model.forward_array(cfg, init_params(cfg, seed=0), x, recorder=rec)
    assert "softmax_over_sources" not in rec.flops_by_op
    assert "global_layer_norm" in rec.flops_by_op

    rec = ops.FlopRecorder()
    cfg = tiny_config("plusplus_gc")
    model.forward_array(cfg, init_params(cfg, seed=0), x, recorder=rec)
    assert "group_shared_linear" in rec.flops_by_op
    assert "group_attention" in rec.flops_by_op

    rec = ops.FlopRecorder()
    cfg = tiny_config("causal_plusplus")
    model.forward_array(cfg, init_params(cfg, seed=0), x, recorder=rec)
    assert "layer_norm" not in rec.flops_by_op
    assert "global_layer_norm" not in rec.flops_by_op


def test_causal_forward_ignores_future(rng):
    cfg = tiny_config("causal_plusplus")
    params = init_params(cfg, seed=3)
    x = rng.standard_normal(400).astype(np.float64)
    base = model.forward_array(cfg, params, x)
    cut = 213
    x2 = x.copy()
    x2[cut:] += rng.standard_normal(400 - cut)
    pert = model.forward_array(cfg, params, x2)
    assert np.array_equal(base[:, :cut], pert[:, :cut])


def test_zero_input_stays_finite():
    cfg = tiny_config("plusplus")
    params = init_params(cfg, seed=0)
    y = model.forward_array(cfg, params, np.zeros(160, dtype=np.float32))
    assert np.isfinite(y).all()


@pytest.mark.parametrize("t", [163, 320, 999, 4000])
def test_separate_clip_preserves_length(t, rng):
    cfg = tiny_config("causal_plusplus")
    params = init_params(cfg, seed=1)
    x = rng.standard_normal(t).astype(np.float32)
    y = model.separate_clip(cfg, params, x)
    assert y.shape == (cfg.n_sources, t)
    assert y.dtype == np.float32


def test_separate_clip_short_input_padded(rng):
    # shorter than one encoder frame still works through padding
    cfg = tiny_config("plusplus")
    params = init_params(cfg, seed=1)
    y = model.separate_clip(cfg, params, rng.standard_normal(7).astype(np.float32))
    assert y.shape == (cfg.n_sources, 7)


def test_separate_clip_scale_equivariant(rng):
    """Standardize/rescale makes the pipeline invariant to input gain."""
    cfg = tiny_config("causal_plusplus")
    params = init_params(cfg, seed=1)
    x = rng.standard_normal(500).astype(np.float32)
    y1 = model.separate_clip(cfg, params, x)
    y2 = model.separate_clip(cfg, params, 8.0 * x)
    np.testing.assert_allclose(y2, 8.0 * y1, rtol=2e-4, atol=2e-5)


def test_forward_array_accepts_row_vector(rng):
    cfg = tiny_config("plusplus")
    params = init_params(cfg, seed=0)
    x = rng.standard_normal(160).astype(np.float32)
    a = model.forward_array(cfg, params, x)
    b = model.forward_array(cfg, params, x.reshape(1, -1))
    np.testing.assert_array_equal(a, b)
