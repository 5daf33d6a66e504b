"""One-shot conversion: source content + pitch rendered with a reference timbre."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import apply_seed_override
from .diffusion import sample
from .dsp import FrameSpec, Waveform, extract_f0, mel_spectrogram, minmax_normalize_f0, read_wav
from .model import VcModel, model_from_checkpoint
from .semantic import extract_semantic, quantize_continuous


def convert_waveforms(model: VcModel, src: Waveform, ref: Waveform,
                      n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Run the conversion pipeline in memory; returns a (T, n_mels) log-mel."""
    if model.codebook is None:
        raise ValueError("checkpoint carries no semantic codebook")
    spec = FrameSpec()
    feats = quantize_continuous(extract_semantic(src, spec), model.codebook)
    pitch = minmax_normalize_f0(extract_f0(src, spec.hop))
    h_src = model.source_enc.encode(feats, pitch)

    ref_mel = model.normalized_mel(mel_spectrogram(ref, spec))
    h_ref = model.ref_enc.encode(ref_mel)

    z = sample(model.sampler_score_fn(), h_src, h_ref,
               shape=(feats.n_frames, model.cfg.n_mels),
               n_steps=n_steps, sched=model.sched, rng=rng)
    return model.denormalize_mel(z)


def convert(src_path, ref_path, ckpt_path, n_steps: int = 100,
            out_path=None) -> np.ndarray:
    """File-level entry point; writes the mel matrix as .npy when out_path is set."""
    model, cfg, _ = model_from_checkpoint(ckpt_path)
    apply_seed_override(cfg)
    rng = np.random.default_rng(cfg.seed)
    mel = convert_waveforms(model, read_wav(src_path), read_wav(ref_path),
                            n_steps, rng)
    if out_path is not None:
        np.save(out_path, mel)
    return mel
