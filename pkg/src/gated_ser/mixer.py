"""Additive noise mixing at a controlled signal-to-noise ratio.

Each mix picks a seeded random segment of the long noise recording, scales
it to hit a target SNR (or adds it untouched in raw_add mode), and guards
against clipping by rescaling the whole mixture rather than hard-limiting.
"""

import math
from dataclasses import dataclass

import numpy as np

from .corpus import EmotionLabel
from .errors import NoiseLengthError, ShapeError, SnrUndefinedError

MIX_MODES = ("target_db", "raw_add")


@dataclass(frozen=True)
class SnrSpec:
    mode: str
    target_db: float | None = None
    segment_seed: int = 0

    def __post_init__(self):
        if self.mode not in MIX_MODES:
            raise ValueError(f"unknown mix mode {self.mode!r}")
        if self.mode == "target_db":
            if self.target_db is None or not math.isfinite(self.target_db):
                raise ValueError("target_db mode needs a finite target")


@dataclass(frozen=True)
class MixedUtterance:
    id: str
    speaker: str
    label: EmotionLabel
    samples: np.ndarray        # after the clip guard, within [-1, 1]
    sample_rate: int
    noise_kind: str
    achieved_snr: float        # dB; +inf when the noise segment is silent
    scaled_noise: np.ndarray   # g * segment, before the clip guard
    noise_offset: int
    clip_gain: float           # 1.0 unless the guard rescaled the mixture


def measure_power(samples):
    """Mean-square power (1/N) * sum(s^2)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ShapeError("cannot measure power of an empty signal")
    return float(np.mean(samples * samples))


def mix(clean, noise, spec):
    """Superimpose a seeded segment of `noise` on `clean` per `spec`."""
    clean_samples = np.asarray(clean.samples, dtype=np.float64)
    noise_samples = np.asarray(noise.samples, dtype=np.float64)
    n = clean_samples.shape[0]
    if noise_samples.shape[0] < n:
        raise NoiseLengthError(
            f"noise {noise.kind!r} has {noise_samples.shape[0]} samples, "
            f"shorter than utterance {clean.id!r} ({n})")
    if noise.sample_rate != clean.sample_rate:
        raise ValueError(
            f"rate mismatch: clean {clean.sample_rate} Hz, noise {noise.sample_rate} Hz")

    rng = np.random.default_rng(spec.segment_seed)
    offset = int(rng.integers(0, noise_samples.shape[0] - n + 1))
    segment = noise_samples[offset:offset + n]

    p_clean = measure_power(clean_samples)
    p_segment = measure_power(segment)
    if spec.mode == "target_db":
        if p_clean == 0.0:
            raise SnrUndefinedError(
                f"utterance {clean.id!r} is silent; target-SNR scaling undefined")
        if p_segment == 0.0:
            raise SnrUndefinedError(
                f"noise segment at offset {offset} is silent; scaling undefined")
        gain = math.sqrt(p_clean / (p_segment * 10.0 ** (spec.target_db / 10.0)))
    else:
        gain = 1.0

    scaled_noise = gain * segment
    mixture = clean_samples + scaled_noise
    peak = float(np.max(np.abs(mixture))) if mixture.size else 0.0
    clip_gain = 1.0 / peak if peak > 1.0 else 1.0
    if clip_gain != 1.0:
        mixture = mixture * clip_gain

    p_scaled = measure_power(scaled_noise)
    if p_scaled == 0.0:
        achieved = math.inf
    elif p_clean == 0.0:
        achieved = -math.inf
    else:
        achieved = 10.0 * math.log10(p_clean / p_scaled)

    return MixedUtterance(
        id=clean.id, speaker=clean.speaker, label=clean.label,
        samples=mixture, sample_rate=clean.sample_rate, noise_kind=noise.kind,
        achieved_snr=achieved, scaled_noise=scaled_noise,
        noise_offset=offset, clip_gain=clip_gain,
    )


def verify_snr(mixed, clean_samples, scaled_noise):
    """Measured SNR in dB of one mix call's constituents.

    Returns math.inf when the scaled noise is silent.
    """
    p_clean = measure_power(clean_samples)
    p_noise = measure_power(scaled_noise)
    if p_noise == 0.0:
        return math.inf
    if p_clean == 0.0:
        return -math.inf
    return 10.0 * math.log10(p_clean / p_noise)
