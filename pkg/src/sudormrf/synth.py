"""Deterministic two-source synthetic mixtures for desk-scale training.

Source one is a small bank of sinusoids with random frequencies, source
two is moving-average-filtered white noise; both are mean-subtracted and
the noise is rescaled so the pair hits the requested SNR exactly.  The
mixture is their literal sum, then the whole clip is standardized by the
mixture's statistics so sources stay aligned with the model input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

SYNTH_SAMPLE_RATE = 8000
_N_TONES = 4
_SMOOTH_TAPS = 7


@dataclass(frozen=True)
class ToyMixture:
    mixture: np.ndarray          # standardized sum, float64 [T]
    sources: np.ndarray          # same scaling as mixture, float64 [2, T]
    raw_mixture: np.ndarray      # pre-standardization sum
    raw_sources: np.ndarray
    snr_db: float
    scale: float                 # std used for standardization


def make_toy_mixture(seed: int, t: int, snr_db: float = 0.0) -> ToyMixture:
    if t < 1:
        raise ValidationError(f"clip length must be >= 1, got {t}")
    rng = np.random.default_rng(seed)
    time = np.arange(t, dtype=np.float64) / SYNTH_SAMPLE_RATE

    freqs = rng.uniform(200.0, 1800.0, size=_N_TONES)
    amps = rng.uniform(0.5, 1.0, size=_N_TONES)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=_N_TONES)
    s1 = np.zeros(t, dtype=np.float64)
    for f, a, p in zip(freqs, amps, phases):
        s1 += a * np.sin(2.0 * np.pi * f * time + p)
    s1 -= s1.mean()

    noise = rng.standard_normal(t)
    kernel = np.full(_SMOOTH_TAPS, 1.0 / _SMOOTH_TAPS)
    s2 = np.convolve(noise, kernel, mode="same")
    s2 -= s2.mean()

    # scale the noise so 10*log10(||s1||^2 / ||s2||^2) == snr_db exactly
    e1 = float(np.sum(s1 * s1))
    e2 = float(np.sum(s2 * s2))
    if e1 == 0.0 or e2 == 0.0:
        raise ValidationError("degenerate clip: a generated source has zero energy")
    s2 *= np.sqrt(e1 / (e2 * 10.0 ** (snr_db / 10.0)))

    raw_mixture = s1 + s2
    std = float(raw_mixture.std())
    mean = float(raw_mixture.mean())
    mixture = (raw_mixture - mean) / std
    sources = np.stack([s1, s2]) / std
    return ToyMixture(mixture=mixture, sources=sources,
                      raw_mixture=raw_mixture,
                      raw_sources=np.stack([s1, s2]),
                      snr_db=snr_db, scale=std)


def toy_dataset(seed: int = 0, n_clips: int = 4, t: int = 4000,
                snr_db: float = 0.0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fixed list of (mixture [T], sources [2, T]) pairs in float32."""
    if n_clips < 1:
        raise ValidationError(f"n_clips must be >= 1, got {n_clips}")
    data = []
    for i in range(n_clips):
        clip = make_toy_mixture(seed * 1000 + i, t, snr_db)
        data.append((clip.mixture.astype(np.float32),
                     clip.sources.astype(np.float32)))
    return data
