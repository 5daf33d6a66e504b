import numpy as np
import pytest

from noro.dsp import SAMPLE_RATE, Waveform


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sine_wave(freq_hz: float, duration_s: float = 1.0, amp: float = 0.5,
              sr: int = SAMPLE_RATE) -> Waveform:
    t = np.arange(int(duration_s * sr)) / sr
    return Waveform(amp * np.sin(2.0 * np.pi * freq_hz * t), sr)


def harmonic_tone(f0_hz: float, amps, duration_s: float = 1.0,
                  sr: int = SAMPLE_RATE) -> Waveform:
    t = np.arange(int(duration_s * sr)) / sr
    sig = sum(a * np.sin(2.0 * np.pi * (h + 1) * f0_hz * t)
              for h, a in enumerate(amps))
    return Waveform(0.5 * sig / np.max(np.abs(sig)), sr)
