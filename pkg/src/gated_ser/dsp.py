"""Waveform to feature pipeline: resampling, framing, and 13-coefficient MFCCs.

Speech stays at its native 16 kHz; 48 kHz noise is low-passed and decimated
down to match. The MFCC front-end is the standard chain: Hamming window,
power spectrum, triangular mel filterbank, log, orthonormal DCT-II, first 13
coefficients kept (c0 included).
"""

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fftpack import dct

from .errors import FilterbankError, TooShortError

SPEECH_RATE = 16000
NOISE_SOURCE_RATE = 48000

# Decimation anti-aliasing filter: cutoff below the 8 kHz target Nyquist
# with margin for the finite transition band.
_DECIM_FACTOR = 3
_DECIM_TAPS = 101
_DECIM_CUTOFF_HZ = 7200.0


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: int = SPEECH_RATE
    frame_len: float = 0.025
    hop: float = 0.010
    n_mels: int = 26
    n_coeffs: int = 13
    log_floor: float = 1e-10
    window: str = "hamming"

    def __post_init__(self):
        if self.n_coeffs > self.n_mels:
            raise ValueError("n_coeffs must not exceed n_mels")
        if self.frame_len < self.hop:
            raise ValueError("frame_len must be at least hop")
        if self.window != "hamming":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def frame_samples(self):
        return int(round(self.frame_len * self.sample_rate))

    @property
    def hop_samples(self):
        return int(round(self.hop * self.sample_rate))

    @property
    def n_fft(self):
        n = 1
        while n < self.frame_samples:
            n *= 2
        return n

    def digest(self):
        text = (f"{self.sample_rate},{self.frame_len},{self.hop},{self.n_mels},"
                f"{self.n_coeffs},{self.log_floor},{self.window}")
        return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class FeatureSequence:
    frames: np.ndarray  # T x n_coeffs
    utterance_id: str

    def __len__(self):
        return self.frames.shape[0]


# ---------------------------------------------------------------------------
# resampling

def _decimation_filter():
    n = np.arange(_DECIM_TAPS)
    center = (_DECIM_TAPS - 1) / 2
    fc = _DECIM_CUTOFF_HZ / NOISE_SOURCE_RATE  # normalized to sample rate
    ideal = 2 * fc * np.sinc(2 * fc * (n - center))
    taps = ideal * hamming_window(_DECIM_TAPS)
    return taps / taps.sum()  # unit DC gain


_DECIM_TAPS_CACHE = None


def resample_48k_to_16k(samples):
    """Windowed-sinc low-pass at 7.2 kHz, then keep every 3rd sample.

    Output length is floor(N / 3) for N input samples.
    """
    global _DECIM_TAPS_CACHE
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.shape[0] < _DECIM_TAPS:
        raise TooShortError(
            f"need at least {_DECIM_TAPS} samples at 48 kHz, got {samples.shape}")
    if _DECIM_TAPS_CACHE is None:
        _DECIM_TAPS_CACHE = _decimation_filter()
    # 'same' keeps the output aligned with the input (filter is linear-phase,
    # delay (taps-1)/2 absorbed), so decimation phase is stable.
    filtered = np.convolve(samples, _DECIM_TAPS_CACHE, mode="same")
    out_len = samples.shape[0] // _DECIM_FACTOR
    return filtered[: out_len * _DECIM_FACTOR : _DECIM_FACTOR].copy()


# ---------------------------------------------------------------------------
# framing and spectra

def frame_signal(samples, config):
    """T x L frame matrix, T = 1 + floor((N - L) / H); tail remainder dropped."""
    samples = np.asarray(samples, dtype=np.float64)
    L = config.frame_samples
    H = config.hop_samples
    N = samples.shape[0]
    if N < L:
        raise TooShortError(f"{N} samples is shorter than one {L}-sample frame")
    T = 1 + (N - L) // H
    idx = np.arange(L)[None, :] + H * np.arange(T)[:, None]
    return samples[idx]


def hamming_window(length):
    if length < 2:
        raise ValueError(f"window length must be at least 2, got {length}")
    n = np.arange(length)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (length - 1))


def power_spectrum(frame, n_fft):
    """|DFT|^2 / n_fft over bins 0..n_fft/2 of the zero-padded frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] > n_fft:
        raise ValueError(f"frame length {frame.shape[-1]} exceeds n_fft {n_fft}")
    spectrum = np.fft.rfft(frame, n=n_fft)
    return (spectrum.real ** 2 + spectrum.imag ** 2) / n_fft


# ---------------------------------------------------------------------------
# mel filterbank

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _mel_band_edges(n_mels, sample_rate):
    """n_mels + 2 edge frequencies, equally spaced in mel from 0 to Nyquist."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))


def filter_center_frequencies(n_mels, sample_rate):
    """Center (peak) frequency in Hz of each triangular filter."""
    return _mel_band_edges(n_mels, sample_rate)[1:-1]


def mel_filterbank(n_mels, n_fft, sample_rate):
    """n_mels x (n_fft/2 + 1) triangular filters, each peak-normalized to 1."""
    if n_mels < 2:
        raise ValueError(f"need at least 2 mel filters, got {n_mels}")
    edges = _mel_band_edges(n_mels, sample_rate)
    bin_hz = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    bank = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        tri = np.maximum(0.0, np.minimum(rising, falling))
        peak = tri.max()
        if peak <= 0.0:
            raise FilterbankError(
                f"filter {m} is empty: {n_mels} filters exceed the resolution "
                f"of a {n_fft}-point FFT at {sample_rate} Hz")
        bank[m] = tri / peak
    return bank


_FILTERBANK_CACHE = {}


def _cached_filterbank(config):
    key = (config.n_mels, config.n_fft, config.sample_rate)
    bank = _FILTERBANK_CACHE.get(key)
    if bank is None:
        bank = mel_filterbank(*key)
        bank.setflags(write=False)
        _FILTERBANK_CACHE[key] = bank
    return bank


# ---------------------------------------------------------------------------
# MFCC

def mfcc(samples, config=MfccConfig(), utterance_id=""):
    """13-coefficient MFCC sequence of a 16 kHz waveform.

    Per frame: Hamming window, power spectrum, mel energies, floored log,
    orthonormal DCT-II, coefficients c0..c12.
    """
    frames = frame_signal(samples, config)
    windowed = frames * hamming_window(config.frame_samples)
    spectra = power_spectrum(windowed, config.n_fft)
    bank = _cached_filterbank(config)
    energies = spectra @ bank.T
    logs = np.log(np.maximum(energies, config.log_floor))
    coeffs = dct(logs, type=2, norm="ortho", axis=1)[:, : config.n_coeffs]
    return FeatureSequence(frames=coeffs, utterance_id=utterance_id)


def zscore(feature_sequences):
    """Optional global z-score over a list of sequences (shared statistics)."""
    stacked = np.concatenate([fs.frames for fs in feature_sequences], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std[std == 0.0] = 1.0
    return [FeatureSequence(frames=(fs.frames - mean) / std,
                            utterance_id=fs.utterance_id)
            for fs in feature_sequences]


# ---------------------------------------------------------------------------
# feature file round-trip: CSV rows of coefficients with a sidecar meta line

def dump_features(fs, config, path):
    lines = [f"# id={fs.utterance_id} frames={len(fs)} config={config.digest()}"]
    for row in fs.frames:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_features(path):
    """Returns (FeatureSequence, config digest) from a dump_features file."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# id="):
        raise ValueError(f"{path}: missing feature metadata line")
    meta = dict(part.split("=", 1) for part in lines[0][2:].split())
    frames = np.array([[float(tok) for tok in line.split(",")]
                       for line in lines[1:] if line])
    if frames.shape[0] != int(meta["frames"]):
        raise ValueError(f"{path}: frame count disagrees with metadata")
    return FeatureSequence(frames=frames, utterance_id=meta["id"]), meta["config"]
