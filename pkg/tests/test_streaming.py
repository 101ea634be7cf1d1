"""Streaming sessions: batch equivalence, state discipline, latency."""

import numpy as np
import pytest
from conftest import tiny_config

from sudormrf import model, streaming
from sudormrf.errors import ValidationError
from sudormrf.params import init_params


def make_session(seed=0, **overrides):
    cfg = tiny_config("causal_plusplus", **overrides)
    params = init_params(cfg, seed=seed)
    return cfg, params, streaming.stream_init(cfg, params)


def stream_full(cfg, params, x, hop):
    state = streaming.stream_init(cfg, params)
    outs = [streaming.stream_push(state, x[lo:lo + hop])
            for lo in range(0, len(x), hop)]
    return np.concatenate(outs, axis=1), state


@pytest.mark.parametrize("hop_mult", [1, 2, 5])
def test_stream_matches_batch(hop_mult, rng):
    cfg, params, _ = make_session(seed=4)
    hop = cfg.hop_alignment * hop_mult
    t = hop * (20 // hop_mult)
    x = rng.standard_normal(t).astype(np.float32)
    batch = model.forward_array(cfg, params, x)
    street, _ = stream_full(cfg, params, x, hop)
    assert street.shape == batch.shape
    assert np.abs(street - batch).max() < 1e-4


def test_stream_requires_causal_variant():
    cfg = tiny_config("plusplus")
    params = init_params(cfg, seed=0)
    with pytest.raises(ValidationError):
        streaming.stream_init(cfg, params)


def test_push_validates_chunks(rng):
    cfg, params, state = make_session()
    hop = cfg.hop_alignment
    with pytest.raises(ValidationError):
        streaming.stream_push(state, np.zeros(hop + 1, dtype=np.float32))
    with pytest.raises(ValidationError):
        streaming.stream_push(state, np.zeros(0, dtype=np.float32))
    with pytest.raises(ValidationError):
        streaming.stream_push(state, np.full(hop, np.nan, dtype=np.float32))
    # hop is fixed by the first successful push
    streaming.stream_push(state, np.zeros(hop, dtype=np.float32))
    with pytest.raises(ValidationError):
        streaming.stream_push(state, np.zeros(2 * hop, dtype=np.float32))


def test_pushed_counter_and_output_shape(rng):
    cfg, params, state = make_session()
    hop = 2 * cfg.hop_alignment
    for i in range(3):
        out = streaming.stream_push(
            state, rng.standard_normal(hop).astype(np.float32))
        assert out.shape == (cfg.n_sources, hop)
    assert state.pushed == 3 * hop


def test_silence_does_not_disturb_state(rng):
    """Zero pushes leave the ring buffers at zero: the next chunk sees the
    same state a fresh session padded with silence would."""
    cfg, params, state = make_session(seed=7)
    hop = cfg.hop_alignment
    streaming.stream_push(state, np.zeros(hop, dtype=np.float32))
    chunk = rng.standard_normal(hop).astype(np.float32)
    after_silence = streaming.stream_push(state, chunk)

    padded = np.concatenate([np.zeros(hop, dtype=np.float32), chunk])
    batch = model.forward_array(cfg, params, padded)
    np.testing.assert_allclose(after_silence, batch[:, hop:], atol=1e-5)


def test_latency_formula():
    cfg = tiny_config("causal_plusplus")
    hop = cfg.hop_alignment
    assert streaming.latency_samples(cfg, hop) == hop + cfg.enc_stride - 1
    with pytest.raises(ValidationError):
        streaming.latency_samples(cfg, hop + 1)


def test_hop_alignment_value():
    cfg = tiny_config("causal_plusplus")
    # stride 10, two stride-2 resamplings -> chunks of 40 samples
    assert cfg.hop_alignment == 40
    full = tiny_config("causal_plusplus", resampling_depth=4)
    assert full.hop_alignment == 160


def test_stream_output_is_float32(rng):
    cfg, params, state = make_session()
    out = streaming.stream_push(
        state, rng.standard_normal(cfg.hop_alignment).astype(np.float32))
    assert out.dtype == np.float32
