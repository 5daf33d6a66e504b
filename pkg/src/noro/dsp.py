"""Deterministic signal-processing front end: framing, log-mel, F0.

All operations are pure functions; frame layout follows
T = 1 + floor((len - fft_size) / hop) throughout so every per-frame
feature in the pipeline stays aligned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve

SAMPLE_RATE = 16000
LOG_FLOOR = 1e-10

F0_MIN_HZ = 50.0
F0_MAX_HZ = 600.0
F0_FRAME = 1024
YIN_THRESHOLD = 0.15


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D signal")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class FrameSpec:
    fft_size: int = 1024
    hop: int = 256
    n_mels: int = 80
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0

    def __post_init__(self):
        if self.hop > self.fft_size:
            raise ValueError("hop must not exceed fft_size")
        if self.n_mels < 1:
            raise ValueError("need at least one mel band")
        if not self.fmin_hz < self.fmax_hz:
            raise ValueError("fmin must be below fmax")

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.fft_size:
            raise ValueError("input too short")
        return 1 + (n_samples - self.fft_size) // self.hop


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # (T, n_mels) natural-log mel energies
    frame_spec: FrameSpec = field(default_factory=FrameSpec)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError("mel frames must be a (T, n_mels) matrix")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("mel frames contain non-finite values")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class F0Contour:
    values_hz: np.ndarray  # per-frame F0, 0 on unvoiced frames
    hop: int = 256

    def __post_init__(self):
        self.values_hz = np.asarray(self.values_hz, dtype=np.float64)
        if np.any(self.values_hz < 0):
            raise ValueError("F0 values must be non-negative")

    @property
    def voiced_mask(self) -> np.ndarray:
        return self.values_hz > 0


@dataclass
class NormalizedF0:
    values: np.ndarray  # in [0, 1]; 0 on unvoiced frames
    hop: int
    no_voiced: bool = False


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(spec: FrameSpec, sample_rate: int) -> np.ndarray:
    """Triangular mel filters evaluated at rfft bin centers, (n_mels, fft/2+1)."""
    if spec.fmax_hz > sample_rate / 2:
        raise ValueError("fmax exceeds Nyquist")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(spec.fmin_hz), hz_to_mel(spec.fmax_hz),
                                     spec.n_mels + 2))
    bin_hz = np.arange(spec.fft_size // 2 + 1) * sample_rate / spec.fft_size
    fb = np.zeros((spec.n_mels, bin_hz.size))
    for i in range(spec.n_mels):
        left, center, right = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_hz - left) / max(center - left, 1e-12)
        falling = (right - bin_hz) / max(right - center, 1e-12)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def frame_signal(x: np.ndarray, frame_size: int, hop: int) -> np.ndarray:
    """(T, frame_size) view of all complete frames."""
    if x.size < frame_size:
        raise ValueError("input too short")
    windows = np.lib.stride_tricks.sliding_window_view(x, frame_size)
    return windows[::hop]


def mel_spectrogram(w: Waveform, spec: FrameSpec | None = None) -> MelSpectrogram:
    """Hann-windowed magnitude STFT -> triangular mel filterbank -> ln with floor."""
    spec = spec or FrameSpec()
    frames = frame_signal(w.samples, spec.fft_size, spec.hop)
    n = np.arange(spec.fft_size)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / spec.fft_size)
    mag = np.abs(np.fft.rfft(frames * window, axis=1))
    fb = mel_filterbank(spec, w.sample_rate_hz)
    mel = np.log(np.maximum(mag @ fb.T, LOG_FLOOR))
    return MelSpectrogram(mel, spec)


def _cmndf(seg: np.ndarray, window: int, tau_max: int) -> np.ndarray:
    """Cumulative-mean-normalized difference function d'(tau) for tau in [0, tau_max]."""
    # d(tau) = sum_j (x[j] - x[j+tau])^2 over j < window, expanded into energy
    # terms (cumulative sums) plus a cross term computed by FFT correlation
    sq = seg * seg
    csum = np.concatenate([[0.0], np.cumsum(sq)])
    corr = fftconvolve(seg[:window + tau_max], seg[:window][::-1], mode="valid")
    e0 = csum[window]
    e_tau = csum[window + np.arange(tau_max + 1)] - csum[np.arange(tau_max + 1)]
    d = e0 + e_tau - 2.0 * corr[:tau_max + 1]
    d = np.maximum(d, 0.0)
    # cumulative-mean normalization; d'(0) = 1 by definition
    running = np.cumsum(d[1:])
    out = np.ones(tau_max + 1)
    taus = np.arange(1, tau_max + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.where(running > 1e-12, d[1:] * taus / running, 1.0)
    return out


def extract_f0(w: Waveform, hop: int = 256) -> F0Contour:
    """YIN-style pitch tracking with cumulative-mean normalization.

    Frames below the voicing confidence (no dip under the threshold in the
    50-600 Hz lag band) are reported as 0; degenerate inputs come back
    all-unvoiced rather than erroring.
    """
    sr = w.sample_rate_hz
    tau_min = max(2, int(np.floor(sr / F0_MAX_HZ)))
    tau_max = int(np.ceil(sr / F0_MIN_HZ))
    frame = max(F0_FRAME, tau_max * 2)
    window = frame - tau_max

    x = w.samples
    if x.size < frame:
        x = np.pad(x, (0, frame - x.size))
    n_frames = 1 + (x.size - frame) // hop

    values = np.zeros(n_frames)
    for i in range(n_frames):
        seg = x[i * hop: i * hop + frame]
        d = _cmndf(seg, window, tau_max)
        tau = _pick_lag(d, tau_min, tau_max)
        if tau is None:
            continue
        tau = _parabolic_refine(d, tau)
        f0 = sr / tau
        values[i] = min(max(f0, F0_MIN_HZ), F0_MAX_HZ)
    return F0Contour(values, hop)


def _pick_lag(d: np.ndarray, tau_min: int, tau_max: int) -> int | None:
    below = np.nonzero(d[tau_min:tau_max] < YIN_THRESHOLD)[0]
    if below.size == 0:
        return None
    tau = tau_min + int(below[0])
    while tau + 1 < tau_max and d[tau + 1] < d[tau]:
        tau += 1
    return tau


def _parabolic_refine(d: np.ndarray, tau: int) -> float:
    if tau <= 0 or tau + 1 >= d.size:
        return float(tau)
    a, b, c = d[tau - 1], d[tau], d[tau + 1]
    denom = a - 2.0 * b + c
    if abs(denom) < 1e-12:
        return float(tau)
    shift = 0.5 * (a - c) / denom
    return float(tau) + float(np.clip(shift, -0.5, 0.5))


def minmax_normalize_f0(f0: F0Contour) -> NormalizedF0:
    """Per-utterance min-max map of voiced frames to [0, 1]; unvoiced stay 0.

    A constant voiced contour maps to 0.5; an all-unvoiced contour comes back
    zero with the no_voiced flag set.
    """
    voiced = f0.voiced_mask
    out = np.zeros_like(f0.values_hz)
    if not voiced.any():
        return NormalizedF0(out, f0.hop, no_voiced=True)
    lo = f0.values_hz[voiced].min()
    hi = f0.values_hz[voiced].max()
    if hi == lo:
        out[voiced] = 0.5
    else:
        out[voiced] = (f0.values_hz[voiced] - lo) / (hi - lo)
    return NormalizedF0(out, f0.hop, no_voiced=False)


# ---------------------------------------------------------------------------
# WAV I/O (mono PCM16 LE at 16 kHz only; no resampler in scope)


def read_wav(path) -> Waveform:
    rate, data = wavfile.read(path)
    if rate != SAMPLE_RATE:
        raise ValueError(f"unsupported sample rate {rate} (expected {SAMPLE_RATE})")
    if data.ndim != 1:
        raise ValueError("only mono WAV files are supported")
    if data.dtype != np.int16:
        raise ValueError("only 16-bit PCM WAV files are supported")
    return Waveform(data.astype(np.float64) / 32768.0, rate)


def write_wav(path, w: Waveform):
    scaled = np.clip(w.samples, -1.0, 1.0) * 32767.0
    wavfile.write(path, w.sample_rate_hz, np.round(scaled).astype(np.int16))
