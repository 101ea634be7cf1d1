"""FastAPI application exposing the engine.

The service is stateless except for open streaming sessions, which live
in process memory keyed by opaque ids.  Every engine failure surfaces as
HTTP 400 with an ErrorBody; anything else is a genuine server bug and is
left to FastAPI's 500 handling.
"""

from __future__ import annotations

import base64
import binascii
import threading
import uuid

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import costmodel, gradcheck, losses, model, streaming, synth, trainer
from ..config import ModelConfig, preset, run_config_from_text
from ..errors import DataIOError, EngineError, UsageError, ValidationError
from ..version import __version__
from ..wavio import WavClip, wav_from_bytes, wav_to_bytes
from ..weights import weights_from_bytes, weights_to_bytes
from . import schemas as S


def _b64_decode(text: str, what: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        raise DataIOError(f"{what} is not valid base64")


def _b64(blob: bytes) -> str:
    return base64.b64encode(blob).decode("ascii")


def _resolve_config(preset_name: str | None, config_text: str | None) -> ModelConfig:
    if preset_name and config_text:
        raise UsageError("give either a preset name or a config document, not both")
    if preset_name:
        return preset(preset_name)
    if config_text:
        return run_config_from_text(config_text).model
    raise UsageError("a preset name or a config document is required")


def _load_weights(weights_b64: str):
    return weights_from_bytes(_b64_decode(weights_b64, "weights_b64"))


def _decode_chunk(chunk_b64: str) -> np.ndarray:
    raw = _b64_decode(chunk_b64, "chunk_b64")
    if len(raw) % 4:
        raise DataIOError("chunk_b64 length is not a multiple of 4 bytes (float32)")
    return np.frombuffer(raw, dtype="<f4").copy()


def _read_clips(blobs: list[str], what: str) -> list[WavClip]:
    clips = [wav_from_bytes(_b64_decode(b, f"{what}[{i}]"))
             for i, b in enumerate(blobs)]
    rates = {c.sample_rate for c in clips}
    lengths = {c.samples.shape[0] for c in clips}
    if len(rates) > 1:
        raise ValidationError(f"{what}: mixed sample rates {sorted(rates)}")
    if len(lengths) > 1:
        raise ValidationError(f"{what}: mixed lengths {sorted(lengths)}")
    return clips


class _Sessions:
    """Streaming sessions; pushes are serialized per session."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._by_id: dict[str, tuple[streaming.StreamState, threading.Lock]] = {}

    def open(self, state: streaming.StreamState) -> str:
        sid = uuid.uuid4().hex
        with self._lock:
            self._by_id[sid] = (state, threading.Lock())
        return sid

    def get(self, sid: str) -> tuple[streaming.StreamState, threading.Lock]:
        with self._lock:
            if sid not in self._by_id:
                raise ValidationError(f"unknown stream session {sid!r}")
            return self._by_id[sid]

    def close(self, sid: str) -> streaming.StreamState:
        with self._lock:
            if sid not in self._by_id:
                raise ValidationError(f"unknown stream session {sid!r}")
            state, _ = self._by_id.pop(sid)
            return state


def create_app() -> FastAPI:
    app = FastAPI(title="sudormrf", version=__version__)
    sessions = _Sessions()

    @app.exception_handler(EngineError)
    async def _engine_error(_: Request, exc: EngineError) -> JSONResponse:
        body = S.ErrorBody(kind=exc.kind, message=str(exc), exit_code=exc.exit_code)
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.get("/health", response_model=S.HealthResponse)
    def health() -> S.HealthResponse:
        return S.HealthResponse(status="ok", version=__version__)

    @app.post("/profile", response_model=S.ProfileResponse)
    def profile(req: S.ProfileRequest) -> S.ProfileResponse:
        cfg = _resolve_config(req.preset, req.config_text)
        if req.samples < cfg.enc_kernel:
            raise ValidationError(
                f"samples={req.samples} is shorter than the encoder kernel "
                f"({cfg.enc_kernel})")
        report = costmodel.cost_report(cfg, req.samples, req.precision)
        return S.ProfileResponse(
            report_kv=report.to_kv(),
            report_text=report.to_text(),
            params_total=report.params_total,
            flops_forward=report.flops_forward,
            flops_backward=report.flops_backward,
            macs_forward=report.macs_forward,
            peak_mem_forward_bytes=report.peak_mem_forward,
            peak_mem_backward_bytes=report.peak_mem_backward,
            receptive_field_samples=report.receptive_field)

    @app.post("/separate", response_model=S.SeparateResponse)
    def separate(req: S.SeparateRequest) -> S.SeparateResponse:
        cfg, params = _load_weights(req.weights_b64)
        clip = wav_from_bytes(_b64_decode(req.wav_b64, "wav_b64"))
        if clip.sample_rate != cfg.sample_rate:
            raise ValidationError(
                f"clip sample_rate {clip.sample_rate} does not match the "
                f"model's {cfg.sample_rate}")
        estimates = model.separate_clip(cfg, params, clip.samples)
        blobs = [wav_to_bytes(WavClip(cfg.sample_rate, row), "float32")
                 for row in estimates]
        return S.SeparateResponse(sample_rate=cfg.sample_rate,
                                  sources_wav_b64=[_b64(b) for b in blobs])

    @app.post("/stream/open", response_model=S.StreamOpenResponse)
    def stream_open(req: S.StreamOpenRequest) -> S.StreamOpenResponse:
        cfg, params = _load_weights(req.weights_b64)
        state = streaming.stream_init(cfg, params)
        hop = req.hop or cfg.hop_alignment
        if hop < 1 or hop % cfg.hop_alignment:
            raise ValidationError(
                f"hop must be a positive multiple of {cfg.hop_alignment}, got {hop}")
        sid = sessions.open(state)
        return S.StreamOpenResponse(
            session_id=sid, hop_samples=hop,
            latency_samples=streaming.latency_samples(cfg, hop),
            sample_rate=cfg.sample_rate, n_sources=cfg.n_sources)

    @app.post("/stream/push", response_model=S.StreamPushResponse)
    def stream_push(req: S.StreamPushRequest) -> S.StreamPushResponse:
        state, lock = sessions.get(req.session_id)
        chunk = _decode_chunk(req.chunk_b64)
        with lock:
            outs = streaming.stream_push(state, chunk)
        return S.StreamPushResponse(
            outputs_b64=[_b64(np.ascontiguousarray(row, dtype="<f4").tobytes())
                         for row in outs])

    @app.post("/stream/close", response_model=S.StreamCloseResponse)
    def stream_close(req: S.StreamCloseRequest) -> S.StreamCloseResponse:
        state = sessions.close(req.session_id)
        return S.StreamCloseResponse(pushed_samples=state.pushed)

    @app.post("/eval", response_model=S.EvalResponse)
    def evaluate(req: S.EvalRequest) -> S.EvalResponse:
        targets = _read_clips(req.targets_wav_b64, "targets")
        estimates = _read_clips(req.estimates_wav_b64, "estimates")
        if targets[0].sample_rate != estimates[0].sample_rate:
            raise ValidationError("targets and estimates use different sample rates")
        if targets[0].samples.shape[0] != estimates[0].samples.shape[0]:
            raise ValidationError("targets and estimates have different lengths")
        S_act = np.stack([c.samples for c in targets]).astype(np.float64)
        S_hat = np.stack([c.samples for c in estimates]).astype(np.float64)
        if req.mixture_wav_b64 is not None:
            mix_clip = wav_from_bytes(_b64_decode(req.mixture_wav_b64, "mixture_wav_b64"))
            if mix_clip.samples.shape[0] != S_act.shape[1]:
                raise ValidationError("mixture length does not match the targets")
            x = mix_clip.samples.astype(np.float64)
        else:
            x = S_act.sum(axis=0)
        if S_act.shape[0] == 1:
            report = losses.eval_single_source(S_act[0], S_hat)
        else:
            report = losses.eval_si_sdri(S_act, S_hat, x)
        return S.EvalResponse(si_sdri_db=report.si_sdri,
                              si_sdr_db=report.si_sdr_abs,
                              n_active=report.n_active,
                              perm=list(report.perm))

    @app.post("/train-toy", response_model=S.TrainToyResponse)
    def train_toy(req: S.TrainToyRequest) -> S.TrainToyResponse:
        cfg = _resolve_config(req.preset, req.config_text)
        if cfg.n_sources != 2:
            raise ValidationError(
                f"the toy task generates 2 sources; config has n_sources={cfg.n_sources}")
        data = synth.toy_dataset(req.seed, req.n_clips, req.samples, req.snr_db)
        records, params = trainer.train_toy(
            cfg, data, epochs=req.epochs, seed=req.seed, base_lr=req.base_lr,
            batch_size=req.batch_size, decay_every=req.decay_every,
            decay_factor=req.decay_factor)
        final = toy_si_sdri(cfg, params, data)
        return S.TrainToyResponse(
            weights_b64=_b64(weights_to_bytes(cfg, params)),
            records=[S.TrainRecordBody(epoch=r.epoch, loss=r.loss,
                                       cum_flops=r.cum_flops,
                                       wall_time_s=r.wall_time)
                     for r in records],
            final_si_sdri_db=final)

    @app.post("/gradcheck", response_model=S.GradcheckResponse)
    def run_gradcheck(req: S.GradcheckRequest) -> S.GradcheckResponse:
        results = gradcheck.run_all(req.seed)
        items = [S.GradcheckItem(name=r.name, error=float(r.error), tol=r.tol,
                                 passed=bool(r.passed)) for r in results]
        return S.GradcheckResponse(results=items,
                                   all_passed=all(r.passed for r in results))

    return app


def toy_si_sdri(cfg: ModelConfig, params: dict[str, np.ndarray],
                data: list[tuple[np.ndarray, np.ndarray]]) -> float:
    """Mean train-set SI-SDR improvement of the model over the mixtures."""
    scores = []
    for mixture, sources in data:
        est = model.forward_array(cfg, params, mixture)
        t_rec = est.shape[1]
        report = losses.eval_si_sdri(sources[:, :t_rec], est, mixture[:t_rec])
        scores.append(report.si_sdri)
    return float(np.mean(scores))
