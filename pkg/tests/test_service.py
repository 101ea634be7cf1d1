"""HTTP service surface: payload plumbing, session handling, error bodies."""

import base64
import warnings

import numpy as np
import pytest
from conftest import tiny_config

from sudormrf import wavio, weights
from sudormrf.params import init_params
from sudormrf.version import __version__

with warnings.catch_warnings():
    warnings.simplefilter("ignore", Warning)
    from starlette.testclient import TestClient

from sudormrf.service import create_app


def b64(blob: bytes) -> str:
    return base64.b64encode(blob).decode("ascii")


def wav_b64(samples, rate=8000) -> str:
    clip = wavio.WavClip(rate, np.asarray(samples, dtype=np.float32))
    return b64(wavio.wav_to_bytes(clip))


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


@pytest.fixture(scope="module")
def causal_weights_b64():
    cfg = tiny_config("causal_plusplus")
    return b64(weights.weights_to_bytes(cfg, init_params(cfg, seed=0)))


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok", "version": __version__}


# ---------------------------------------------------------------------------
# /profile
# ---------------------------------------------------------------------------


def test_profile_preset(client):
    r = client.post("/profile", json={"preset": "base-1.0x"})
    assert r.status_code == 200
    body = r.json()
    assert body["params_total"] == 2_686_081
    assert body["receptive_field_samples"] == 10_421
    assert "params_total=2686081" in body["report_kv"]
    assert "parameters" in body["report_text"]


def test_profile_config_text(client):
    cfg = tiny_config("plusplus")
    r = client.post("/profile", json={"config_text": cfg.to_kv(), "samples": 800})
    assert r.status_code == 200
    assert r.json()["flops_forward"] > 0


def test_profile_usage_errors(client):
    both = client.post("/profile", json={"preset": "base-1.0x",
                                         "config_text": "variant=base\n"})
    neither = client.post("/profile", json={})
    for r in (both, neither):
        assert r.status_code == 400
        body = r.json()
        assert body["kind"] == "usage"
        assert body["exit_code"] == 1


def test_profile_unknown_preset(client):
    r = client.post("/profile", json={"preset": "huge-42x"})
    assert r.status_code == 400
    assert r.json()["kind"] == "validation"


def test_profile_too_few_samples(client):
    r = client.post("/profile", json={"preset": "base-1.0x", "samples": 5})
    assert r.status_code == 400
    assert r.json()["kind"] == "validation"


# ---------------------------------------------------------------------------
# /separate
# ---------------------------------------------------------------------------


def test_separate_round_trip(client, causal_weights_b64, rng):
    t = 400
    r = client.post("/separate", json={
        "weights_b64": causal_weights_b64,
        "wav_b64": wav_b64(rng.standard_normal(t))})
    assert r.status_code == 200
    body = r.json()
    assert body["sample_rate"] == 8000
    assert len(body["sources_wav_b64"]) == 2
    for blob in body["sources_wav_b64"]:
        clip = wavio.wav_from_bytes(base64.b64decode(blob))
        assert clip.samples.shape == (t,)
        assert np.isfinite(clip.samples).all()


def test_separate_rate_mismatch(client, causal_weights_b64, rng):
    r = client.post("/separate", json={
        "weights_b64": causal_weights_b64,
        "wav_b64": wav_b64(rng.standard_normal(400), rate=16000)})
    assert r.status_code == 400
    assert r.json()["kind"] == "validation"


def test_separate_bad_base64(client, causal_weights_b64):
    r = client.post("/separate", json={"weights_b64": causal_weights_b64,
                                       "wav_b64": "@@@not-base64@@@"})
    assert r.status_code == 400
    body = r.json()
    assert body["kind"] == "data_io"
    assert body["exit_code"] == 2


# ---------------------------------------------------------------------------
# /stream
# ---------------------------------------------------------------------------


def test_stream_lifecycle(client, causal_weights_b64, rng):
    opened = client.post("/stream/open", json={"weights_b64": causal_weights_b64})
    assert opened.status_code == 200
    info = opened.json()
    hop = info["hop_samples"]
    assert hop == 40                               # tiny config alignment
    assert info["latency_samples"] == hop + 10 - 1
    assert info["n_sources"] == 2
    sid = info["session_id"]

    chunk = rng.standard_normal(hop).astype("<f4")
    pushed = client.post("/stream/push", json={
        "session_id": sid, "chunk_b64": b64(chunk.tobytes())})
    assert pushed.status_code == 200
    outs = pushed.json()["outputs_b64"]
    assert len(outs) == 2
    for blob in outs:
        samples = np.frombuffer(base64.b64decode(blob), dtype="<f4")
        assert samples.shape == (hop,)

    closed = client.post("/stream/close", json={"session_id": sid})
    assert closed.status_code == 200
    assert closed.json()["pushed_samples"] == hop

    again = client.post("/stream/push", json={
        "session_id": sid, "chunk_b64": b64(chunk.tobytes())})
    assert again.status_code == 400
    assert "unknown stream session" in again.json()["message"]


def test_stream_open_bad_hop(client, causal_weights_b64):
    r = client.post("/stream/open", json={"weights_b64": causal_weights_b64,
                                          "hop": 41})
    assert r.status_code == 400
    assert r.json()["kind"] == "validation"


def test_stream_open_noncausal_rejected(client):
    cfg = tiny_config("plusplus")
    blob = weights.weights_to_bytes(cfg, init_params(cfg, seed=0))
    r = client.post("/stream/open", json={"weights_b64": b64(blob)})
    assert r.status_code == 400
    assert r.json()["kind"] == "validation"


def test_stream_push_misaligned_bytes(client, causal_weights_b64):
    sid = client.post("/stream/open",
                      json={"weights_b64": causal_weights_b64}).json()["session_id"]
    r = client.post("/stream/push", json={"session_id": sid,
                                          "chunk_b64": b64(b"\x00\x01\x02")})
    assert r.status_code == 400
    assert r.json()["kind"] == "data_io"
    client.post("/stream/close", json={"session_id": sid})


def test_stream_unknown_session(client):
    r = client.post("/stream/push", json={"session_id": "nope", "chunk_b64": ""})
    assert r.status_code == 400
    assert r.json()["kind"] == "validation"


# ---------------------------------------------------------------------------
# /eval
# ---------------------------------------------------------------------------


def test_eval_perfect_estimates(client, rng):
    S = rng.standard_normal((2, 800)).astype(np.float32)
    payload = {"targets_wav_b64": [wav_b64(S[0]), wav_b64(S[1])],
               "estimates_wav_b64": [wav_b64(S[0]), wav_b64(S[1])]}
    r = client.post("/eval", json=payload)
    assert r.status_code == 200
    body = r.json()
    assert body["n_active"] == 2
    assert body["perm"] == [0, 1]
    assert body["si_sdr_db"] > 100.0
    assert body["si_sdri_db"] > 50.0


def test_eval_explicit_mixture_matches_default(client, rng):
    S = rng.standard_normal((2, 600)).astype(np.float32)
    est = [wav_b64(S[0] + 0.1), wav_b64(S[1] - 0.1)]
    base = {"targets_wav_b64": [wav_b64(S[0]), wav_b64(S[1])],
            "estimates_wav_b64": est}
    explicit = dict(base, mixture_wav_b64=wav_b64(S[0] + S[1]))
    a = client.post("/eval", json=base).json()
    b = client.post("/eval", json=explicit).json()
    assert a["si_sdri_db"] == pytest.approx(b["si_sdri_db"], abs=1e-4)


def test_eval_single_target(client, rng):
    s = rng.standard_normal(500).astype(np.float32)
    r = client.post("/eval", json={
        "targets_wav_b64": [wav_b64(s)],
        "estimates_wav_b64": [wav_b64(rng.standard_normal(500)), wav_b64(s)]})
    assert r.status_code == 200
    body = r.json()
    assert body["si_sdri_db"] is None
    assert body["n_active"] == 1
    assert body["perm"] == [1]
    assert body["si_sdr_db"] > 100.0


def test_eval_mixed_rates_and_lengths(client, rng):
    s = rng.standard_normal(300).astype(np.float32)
    mixed_rate = client.post("/eval", json={
        "targets_wav_b64": [wav_b64(s), wav_b64(s, rate=16000)],
        "estimates_wav_b64": [wav_b64(s), wav_b64(s)]})
    assert mixed_rate.status_code == 400
    assert "mixed sample rates" in mixed_rate.json()["message"]
    short = client.post("/eval", json={
        "targets_wav_b64": [wav_b64(s), wav_b64(s)],
        "estimates_wav_b64": [wav_b64(s[:200]), wav_b64(s[:200])]})
    assert short.status_code == 400


# ---------------------------------------------------------------------------
# /train-toy and /gradcheck
# ---------------------------------------------------------------------------


def test_train_toy_small_run(client):
    cfg = tiny_config("plusplus")
    r = client.post("/train-toy", json={
        "preset": None, "config_text": cfg.to_kv(),
        "epochs": 2, "n_clips": 1, "samples": 240})
    assert r.status_code == 200
    body = r.json()
    assert [rec["epoch"] for rec in body["records"]] == [0, 1]
    assert body["records"][1]["cum_flops"] > body["records"][0]["cum_flops"]
    assert np.isfinite(body["final_si_sdri_db"])
    cfg2, params2 = weights.weights_from_bytes(
        base64.b64decode(body["weights_b64"]))
    assert cfg2 == cfg
    assert all(np.isfinite(v).all() for v in params2.values())


def test_train_toy_needs_two_source_config(client):
    cfg = tiny_config("plusplus", n_sources=3)
    r = client.post("/train-toy", json={
        "preset": None, "config_text": cfg.to_kv(), "epochs": 1,
        "n_clips": 1, "samples": 240})
    assert r.status_code == 400
    assert "n_sources" in r.json()["message"]


def test_gradcheck_endpoint(client):
    r = client.post("/gradcheck", json={"seed": 0})
    assert r.status_code == 200
    body = r.json()
    assert body["all_passed"] is True
    assert len(body["results"]) >= 20
    for item in body["results"]:
        assert item["error"] <= item["tol"]
