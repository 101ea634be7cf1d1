"""Request and response bodies for the HTTP service.

Binary payloads (WAV files, weight files, raw sample chunks) travel as
base64 strings; raw chunks are little-endian float32 samples.  Errors
come back as HTTP 400 with an ErrorBody naming the error kind, which the
CLI maps onto its exit codes.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    kind: str
    message: str
    exit_code: int


class HealthResponse(BaseModel):
    status: str
    version: str


class ProfileRequest(BaseModel):
    preset: str | None = None
    config_text: str | None = None     # key=value ModelConfig document
    samples: int = 8000
    precision: str = "float32"


class ProfileResponse(BaseModel):
    report_kv: str
    report_text: str
    params_total: int
    flops_forward: int
    flops_backward: int
    macs_forward: int
    peak_mem_forward_bytes: int
    peak_mem_backward_bytes: int
    receptive_field_samples: int


class SeparateRequest(BaseModel):
    weights_b64: str
    wav_b64: str


class SeparateResponse(BaseModel):
    sample_rate: int
    sources_wav_b64: list[str]         # one float32 WAV per source


class StreamOpenRequest(BaseModel):
    weights_b64: str
    hop: int = 0                       # 0 means one hop-alignment span


class StreamOpenResponse(BaseModel):
    session_id: str
    hop_samples: int
    latency_samples: int
    sample_rate: int
    n_sources: int


class StreamPushRequest(BaseModel):
    session_id: str
    chunk_b64: str                     # raw little-endian float32 samples


class StreamPushResponse(BaseModel):
    outputs_b64: list[str]             # per source, same length as the chunk


class StreamCloseRequest(BaseModel):
    session_id: str


class StreamCloseResponse(BaseModel):
    pushed_samples: int


class EvalRequest(BaseModel):
    targets_wav_b64: list[str] = Field(min_length=1)
    estimates_wav_b64: list[str] = Field(min_length=1)
    mixture_wav_b64: str | None = None    # defaults to the sum of targets


class EvalResponse(BaseModel):
    si_sdri_db: float | None
    si_sdr_db: float | None
    n_active: int
    perm: list[int]


class TrainToyRequest(BaseModel):
    preset: str | None = "toy"
    config_text: str | None = None
    epochs: int = 400
    seed: int = 0
    n_clips: int = 4
    samples: int = 4000
    snr_db: float = 0.0
    base_lr: float = 1e-3
    batch_size: int = 4
    decay_every: int = 0               # 0 disables the step decay
    decay_factor: float = 5.0


class TrainRecordBody(BaseModel):
    epoch: int
    loss: float
    cum_flops: int
    wall_time_s: float


class TrainToyResponse(BaseModel):
    weights_b64: str
    records: list[TrainRecordBody]
    final_si_sdri_db: float


class GradcheckRequest(BaseModel):
    seed: int = 0


class GradcheckItem(BaseModel):
    name: str
    error: float
    tol: float
    passed: bool


class GradcheckResponse(BaseModel):
    results: list[GradcheckItem]
    all_passed: bool
