"""Synthetic multi-speaker speech and noise generation.

A speaker is a fixed harmonic amplitude profile plus an F0 range; an
utterance is a run of random "syllables": F0 glides inside the speaker's
range, rendered with the speaker's harmonics (plus a per-syllable spectral
tilt standing in for vowel color) under an attack/decay amplitude envelope.
Everything is a pure function of the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, Waveform, write_wav
from .manifest import ManifestEntry, write_manifest

N_HARMONICS = 10
MAX_PARTIAL_HZ = 7600.0
F0_MARGIN = 0.04  # glide targets keep this fraction inside the declared range
RAMP_S = 0.015
NOISE_CLIP_S = 3.0


@dataclass
class SpeakerProfile:
    speaker_id: str
    harmonic_amps: np.ndarray  # (N_HARMONICS,), peak-normalized
    f0_lo: float
    f0_hi: float


def make_speakers(n: int, rng: np.random.Generator) -> list[SpeakerProfile]:
    speakers = []
    for i in range(n):
        center = rng.uniform(115.0, 300.0)
        tilt = rng.uniform(0.2, 1.3)
        amps = np.exp(rng.normal(0.0, 0.8, N_HARMONICS))
        amps *= (np.arange(1, N_HARMONICS + 1, dtype=np.float64)) ** (-tilt)
        amps /= amps.max()
        speakers.append(SpeakerProfile(f"spk{i:02d}", amps,
                                       f0_lo=center * 0.85, f0_hi=center * 1.15))
    return speakers


def _syllable(profile: SpeakerProfile, n: int, rng: np.random.Generator) -> np.ndarray:
    sr = SAMPLE_RATE
    lo = profile.f0_lo * (1.0 + F0_MARGIN)
    hi = profile.f0_hi * (1.0 - F0_MARGIN)
    f_a, f_b = rng.uniform(lo, hi, size=2)
    base = np.linspace(f_a, f_b, n)
    vib = 1.0 + 0.012 * np.sin(2.0 * np.pi * rng.uniform(4.0, 6.0) * np.arange(n) / sr)
    f0 = base * vib
    phase = 2.0 * np.pi * np.cumsum(f0) / sr

    syl_tilt = rng.uniform(-0.4, 0.4)
    sig = np.zeros(n)
    for h in range(1, N_HARMONICS + 1):
        if h * f0.max() >= MAX_PARTIAL_HZ:
            break
        amp = profile.harmonic_amps[h - 1] * h ** (-syl_tilt)
        sig += amp * np.sin(h * phase)

    ramp = min(int(RAMP_S * sr), n // 3)
    env = np.full(n, rng.uniform(0.5, 1.0))
    if ramp > 0:
        fade = np.sin(0.5 * np.pi * np.arange(ramp) / ramp) ** 2
        env[:ramp] *= fade
        env[-ramp:] *= fade[::-1]
    return sig * env


def synth_utterance(profile: SpeakerProfile, rng: np.random.Generator,
                    duration_range: tuple[float, float] = (2.0, 4.0)) -> Waveform:
    sr = SAMPLE_RATE
    n_total = int(rng.uniform(*duration_range) * sr)
    out = np.zeros(n_total)
    cursor = 0
    while cursor < n_total - int(0.1 * sr):
        n_syl = int(rng.uniform(0.12, 0.30) * sr)
        n_syl = min(n_syl, n_total - cursor)
        out[cursor:cursor + n_syl] = _syllable(profile, n_syl, rng)
        cursor += n_syl + int(rng.uniform(0.0, 0.05) * sr)
    peak = np.abs(out).max()
    if peak > 0:
        out *= 0.35 / peak
    return Waveform(out, sr)


# ---------------------------------------------------------------------------
# noise clips (the stand-in noise inventory for augmentation)


def _shaped_noise(rng, n, shape_fn) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    return np.fft.irfft(spectrum * shape_fn(freqs), n=n)


def make_noise_clips(rng: np.random.Generator) -> dict[str, np.ndarray]:
    sr = SAMPLE_RATE
    n = int(NOISE_CLIP_S * sr)
    t = np.arange(n) / sr
    clips: dict[str, np.ndarray] = {}
    clips["white"] = rng.standard_normal(n)
    clips["pink"] = _shaped_noise(rng, n, lambda f: 1.0 / np.sqrt(np.maximum(f, 20.0)))
    clips["brown"] = _shaped_noise(rng, n, lambda f: 1.0 / np.maximum(f, 20.0))
    clips["band_low"] = _shaped_noise(rng, n, lambda f: ((f > 300) & (f < 1500)) * 1.0)
    clips["band_high"] = _shaped_noise(rng, n, lambda f: ((f > 2000) & (f < 6000)) * 1.0)
    hum = sum(a * np.sin(2 * np.pi * f * t) for f, a in
              [(50, 1.0), (100, 0.6), (150, 0.4), (250, 0.2)])
    clips["hum"] = hum + 0.05 * rng.standard_normal(n)
    bursts = (rng.random(n) < 0.002).astype(np.float64)
    envelope = np.convolve(bursts, np.exp(-np.arange(400) / 80.0), mode="same")
    clips["crackle"] = rng.standard_normal(n) * (0.1 + envelope)
    sweep_f = 300.0 * np.exp(np.cumsum(rng.normal(0, 0.002, n)))
    sweep_f = np.clip(sweep_f, 200.0, 4000.0)
    clips["warble"] = np.sin(2 * np.pi * np.cumsum(sweep_f) / sr)
    for name, sig in clips.items():
        clips[name] = 0.3 * sig / np.abs(sig).max()
    return clips


def synth_dataset(out_dir, n_speakers: int = 8, utts_per_speaker: int = 20,
                  seed: int = 0,
                  duration_range: tuple[float, float] = (2.0, 4.0)) -> Path:
    """Write WAVs, noise clips, a speaker table, and the manifest; returns its path."""
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    noise_dir = out_dir / "noise"
    wav_dir.mkdir(parents=True, exist_ok=True)
    noise_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    speakers = make_speakers(n_speakers, rng)
    entries: list[ManifestEntry] = []
    for sp in speakers:
        for ui in range(utts_per_speaker):
            utt_id = f"{sp.speaker_id}_utt{ui:02d}"
            rel = Path("wav") / f"{utt_id}.wav"
            write_wav(out_dir / rel, synth_utterance(sp, rng, duration_range))
            entries.append(ManifestEntry(utt_id, rel, sp.speaker_id))

    for name, sig in make_noise_clips(rng).items():
        write_wav(noise_dir / f"{name}.wav", Waveform(sig))

    table = {sp.speaker_id: {"f0_lo": sp.f0_lo, "f0_hi": sp.f0_hi,
                             "harmonic_amps": sp.harmonic_amps.tolist()}
             for sp in speakers}
    (out_dir / "speakers.json").write_text(json.dumps(table, indent=2, sort_keys=True))

    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(manifest_path, entries, noise_dir=Path("noise"))
    return manifest_path
