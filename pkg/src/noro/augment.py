"""SNR-exact noise mixing, SNR sampling, and reference/source segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Waveform


@dataclass
class SnrSpec:
    mean_db: float = 0.0
    std_db: float = 20.0
    clip_min_db: float = -10.0
    clip_max_db: float = 40.0

    def __post_init__(self):
        if self.std_db <= 0:
            raise ValueError("SNR std must be positive")
        if not self.clip_min_db < self.clip_max_db:
            raise ValueError("SNR clip range is degenerate")


@dataclass
class SegmentSplit:
    """Contiguous reference slice plus the concatenated complement."""

    reference: np.ndarray
    remainder: np.ndarray
    fraction: float
    start: int

    @property
    def reference_length(self) -> int:
        return self.reference.shape[0]


REFERENCE_FRACTION_RANGE = (0.25, 0.45)


def measure_power(w: Waveform | np.ndarray) -> float:
    """Mean squared amplitude."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot measure power of an empty signal")
    return float(np.mean(x * x))


def _fit_noise(noise: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Tile (short) or slice (long) the noise to exactly n samples."""
    if noise.size == n:
        return noise.copy()
    if noise.size < n:
        offset = int(rng.integers(noise.size))
        rolled = np.roll(noise, -offset)
        reps = int(np.ceil(n / noise.size))
        return np.tile(rolled, reps)[:n]
    start = int(rng.integers(noise.size - n + 1))
    return noise[start:start + n].copy()


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float,
               rng: np.random.Generator) -> Waveform:
    """Add a gain-scaled noise segment so the mix hits snr_db exactly.

    The gain solves 10*log10(P_clean / (g^2 P_noise)) = snr_db against the
    measured power of the specific segment that gets added.
    """
    if clean.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError("clean and noise sample rates differ")
    if measure_power(clean) <= 0.0:
        raise ValueError("silent clean clip")
    seg = _fit_noise(noise.samples, len(clean), rng)
    p_seg = float(np.mean(seg * seg))
    if p_seg <= 0.0:
        raise ValueError("silent noise clip")
    gain = np.sqrt(measure_power(clean) / (p_seg * 10.0 ** (snr_db / 10.0)))
    return Waveform(clean.samples + gain * seg, clean.sample_rate_hz)


def sample_snr(spec: SnrSpec, rng: np.random.Generator) -> float:
    draw = rng.normal(spec.mean_db, spec.std_db)
    return float(np.clip(draw, spec.clip_min_db, spec.clip_max_db))


def split_reference(sample: Waveform | np.ndarray, rng: np.random.Generator,
                    fraction_range: tuple[float, float] = REFERENCE_FRACTION_RANGE,
                    ) -> SegmentSplit:
    """Carve out a contiguous 25-45% slice as the reference.

    Fraction then start offset are drawn uniformly; the remainder is the
    prefix and suffix concatenated, so the two parts partition the sample.
    """
    x = sample.samples if isinstance(sample, Waveform) else np.asarray(sample)
    n = x.shape[0]
    if n < 2:
        raise ValueError("sample too short to split")
    lo, hi = fraction_range
    frac = float(rng.uniform(lo, hi))
    ref_len = int(np.clip(round(frac * n), 1, n - 1))
    start = int(rng.integers(n - ref_len + 1))
    reference = x[start:start + ref_len].copy()
    remainder = np.concatenate([x[:start], x[start + ref_len:]], axis=0)
    return SegmentSplit(reference, remainder, frac, start)
