"""Time-domain audio source separation with hand-written kernels.

The package is organized as a numpy-only engine (ops, model, autograd,
losses, trainer, cost model, streaming) plus artifact plumbing (WAV and
weight I/O, synthetic data) and an HTTP service in ``sudormrf.service``
with a CLI front end in ``sudormrf.cli``.
"""

from .config import (PRESETS, ModelConfig, RunConfig, default_enc_kernel,
                     parse_kv, preset, run_config_from_text)
from .costmodel import (CostReport, cost_report, count_flops, count_params,
                        dependency_interval, estimate_peak_memory,
                        measure_latency, receptive_field)
from .errors import (DataIOError, EngineError, NumericalError, UsageError,
                     ValidationError)
from .gradcheck import run_all as run_gradchecks
from .losses import (EvalReport, PITResult, eval_si_sdri, eval_single_source,
                     loss_variable_sources, pit_loss_fixed, si_sdr)
from .model import forward_array, separate_clip
from .params import init_params, param_spec, validate_params
from .streaming import StreamState, latency_samples, stream_init, stream_push
from .synth import ToyMixture, make_toy_mixture, toy_dataset
from .trainer import TrainRecord, adam_init, adam_step, lr_schedule, train_toy
from .version import __version__
from .wavio import WavClip, wav_from_bytes, wav_read, wav_to_bytes, wav_write
from .weights import (weights_from_bytes, weights_load, weights_save,
                      weights_to_bytes)

__all__ = [
    "PRESETS", "ModelConfig", "RunConfig", "default_enc_kernel", "parse_kv",
    "preset", "run_config_from_text",
    "CostReport", "cost_report", "count_flops", "count_params",
    "dependency_interval", "estimate_peak_memory", "measure_latency",
    "receptive_field",
    "DataIOError", "EngineError", "NumericalError", "UsageError",
    "ValidationError",
    "run_gradchecks",
    "EvalReport", "PITResult", "eval_si_sdri", "eval_single_source",
    "loss_variable_sources", "pit_loss_fixed", "si_sdr",
    "forward_array", "separate_clip",
    "init_params", "param_spec", "validate_params",
    "StreamState", "latency_samples", "stream_init", "stream_push",
    "ToyMixture", "make_toy_mixture", "toy_dataset",
    "TrainRecord", "adam_init", "adam_step", "lr_schedule", "train_toy",
    "__version__",
    "WavClip", "wav_from_bytes", "wav_read", "wav_to_bytes", "wav_write",
    "weights_from_bytes", "weights_load", "weights_save", "weights_to_bytes",
]
