"""Training recipes: baseline (diffusion only) and noro (dual branch + contrastive).

Per step: sample a batch, carve each sample into reference/source segments,
build the conditioning (single clean branch in baseline mode; averaged
clean/noisy branches in noro mode), take the weighted total loss, and apply
one clipped momentum-SGD update. Runs are bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .augment import SnrSpec, measure_power, mix_at_snr, sample_snr, split_reference
from .autodiff import Tape, Tensor, backward
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .diffusion import T_MIN, diffusion_loss
from .dsp import (F0Contour, FrameSpec, MelSpectrogram, Waveform, extract_f0,
                  mel_spectrogram, minmax_normalize_f0, read_wav)
from .layers import MomentumSgd, clip_global_norm
from .manifest import Manifest, load_manifest
from .model import VcModel
from .reference import (average_reprs, contrastive_speaker_loss, dual_branch_encode,
                        pool_and_concat)
from .semantic import FeatureSequence, extract_semantic, kmeans_fit, quantize_continuous

LOG_EVERY = 200


@dataclass
class UttData:
    utt_id: str
    speaker_id: str
    speaker_idx: int
    wav: Waveform
    mel: np.ndarray       # raw log-mel (T, n_mels)
    norm_mel: np.ndarray  # z-normalized mel, filled in by prepare()
    feats: np.ndarray     # cepstral features, quantized in place by prepare()
    f0: np.ndarray        # per-frame F0 in Hz


def load_utterances(manifest: Manifest) -> list[UttData]:
    spec = FrameSpec()
    speakers = manifest.speakers()
    out = []
    for e in manifest.entries:
        wav = read_wav(e.wav_path)
        mel = mel_spectrogram(wav, spec)
        feats = extract_semantic(wav, spec)
        f0 = extract_f0(wav, spec.hop)
        n = min(mel.n_frames, feats.n_frames, f0.values_hz.size)
        out.append(UttData(e.utt_id, e.speaker_id, speakers.index(e.speaker_id),
                           wav, mel.frames[:n], np.empty(0), feats.frames[:n],
                           f0.values_hz[:n]))
    return out


def prepare(model: VcModel, data: list[UttData], rng: np.random.Generator):
    """Fit codebook + mel stats when absent, then normalize/quantize the cache."""
    if model.codebook is None:
        all_feats = np.vstack([u.feats for u in data])
        model.codebook = kmeans_fit(all_feats, model.cfg.k, rng)
    if not model.stats_fitted:
        model.fit_mel_stats([u.mel for u in data])
    for u in data:
        u.norm_mel = model.normalize_mel(u.mel)
        u.feats = quantize_continuous(
            FeatureSequence(u.feats), model.codebook).frames


def sample_batch(by_speaker: dict[int, list[UttData]], batch_size: int,
                 rng: np.random.Generator) -> list[UttData]:
    """Round-robin over a few sampled speakers so every noro batch has >= 2."""
    speakers = sorted(by_speaker)
    n_groups = min(4, len(speakers), batch_size)
    chosen = rng.choice(speakers, size=n_groups, replace=False)
    batch = []
    for i in range(batch_size):
        spk = by_speaker[int(chosen[i % n_groups])]
        batch.append(spk[int(rng.integers(len(spk)))])
    return batch


def _reference_segment_wav(u: UttData, start: int, n_frames: int,
                           spec: FrameSpec) -> Waveform:
    lo = start * spec.hop
    hi = (start + n_frames - 1) * spec.hop + spec.fft_size
    return Waveform(u.wav.samples[lo:hi], u.wav.sample_rate_hz)


def _item_losses(model: VcModel, u: UttData, noro: bool, noise_clips: list[Waveform],
                 snr_spec: SnrSpec, rng_data, rng_noise, rng_diff, spec: FrameSpec):
    """One sample's diffusion loss plus its reference representations."""
    split = split_reference(u.norm_mel, rng_data)
    n_ref = split.reference_length
    clean_ref = MelSpectrogram(split.reference, spec)

    if noro:
        seg = _reference_segment_wav(u, split.start, n_ref, spec)
        if measure_power(seg) > 0.0:
            snr = sample_snr(snr_spec, rng_noise)
            clip = noise_clips[int(rng_noise.integers(len(noise_clips)))]
            mixed = mix_at_snr(seg, clip, snr, rng_noise)
            noisy_frames = model.normalize_mel(mel_spectrogram(mixed, spec).frames)
        else:  # an all-silent reference slice cannot carry an SNR
            noisy_frames = split.reference
        h_ref, h_noisy = dual_branch_encode(clean_ref,
                                            MelSpectrogram(noisy_frames, spec),
                                            model.ref_enc)
        h_cond = average_reprs(h_ref, h_noisy)
    else:
        h_ref = model.ref_enc.encode(clean_ref)
        h_noisy = None
        h_cond = h_ref

    t_total = u.norm_mel.shape[0]
    idx = np.r_[0:split.start, split.start + n_ref:t_total]
    feats = FeatureSequence(u.feats[idx], spec.hop)
    pitch = minmax_normalize_f0(F0Contour(u.f0[idx], spec.hop))
    h_src = model.source_enc.encode(feats, pitch)

    t = float(rng_diff.uniform(T_MIN, 1.0))
    l_diff = diffusion_loss(model.score_net.score_forward, split.remainder, t,
                            h_src, h_cond, model.sched, rng_diff)
    return l_diff, h_ref, h_noisy


def train(cfg: TrainConfig, manifest_path, out_path, warm_start=None,
          metrics_path=None, quiet: bool = False) -> Path:
    noro = cfg.mode == "noro"
    manifest = load_manifest(manifest_path)
    if noro and warm_start is None:
        raise ValueError("noro mode requires a baseline warm-start checkpoint")
    if noro and manifest.noise_dir is None:
        raise ValueError("noro mode requires a noise_dir in the manifest")

    rng_init, rng_kmeans, rng_data, rng_noise, rng_diff = \
        np.random.default_rng(cfg.seed).spawn(5)
    model = VcModel(cfg, rng_init)
    if warm_start is not None:
        arrays, _, _ = load_checkpoint(warm_start)
        model.load_arrays(arrays)

    data = load_utterances(manifest)
    prepare(model, data, rng_kmeans)
    by_speaker: dict[int, list[UttData]] = {}
    for u in data:
        by_speaker.setdefault(u.speaker_idx, []).append(u)
    if noro and len(by_speaker) < 2:
        raise ValueError("noro mode needs at least 2 distinct speakers")

    noise_clips: list[Waveform] = []
    if noro:
        paths = sorted(manifest.noise_dir.glob("*.wav"))
        if not paths:
            raise ValueError(f"no noise clips found in {manifest.noise_dir}")
        noise_clips = [read_wav(p) for p in paths]

    spec = FrameSpec()
    snr_spec = SnrSpec()
    params = model.parameters()
    opt = MomentumSgd(cfg.lr, cfg.momentum)
    beta = cfg.beta if noro else 0.0

    out_path = Path(out_path)
    metrics_file = open(metrics_path, "w") if metrics_path else None
    try:
        for step in range(cfg.steps):
            batch = sample_batch(by_speaker, cfg.batch_size, rng_data)
            with Tape() as tape:
                l_diff_sum = None
                h_refs, h_noisys, labels = [], [], []
                for u in batch:
                    l_i, h_ref, h_noisy = _item_losses(
                        model, u, noro, noise_clips, snr_spec,
                        rng_data, rng_noise, rng_diff, spec)
                    l_diff_sum = l_i if l_diff_sum is None else ad.add(l_diff_sum, l_i)
                    h_refs.append(h_ref)
                    h_noisys.append(h_noisy)
                    labels.append(u.speaker_idx)
                l_diff = ad.mul(l_diff_sum, 1.0 / len(batch))
                if noro:
                    cb = pool_and_concat(h_refs, h_noisys, labels, cfg.tau)
                    l_ref = contrastive_speaker_loss(cb)
                    total = ad.add(ad.mul(l_diff, cfg.alpha), ad.mul(l_ref, beta))
                else:
                    l_ref = Tensor(0.0)
                    total = ad.add(ad.mul(l_diff, cfg.alpha), ad.mul(l_ref, beta))

            if not math.isfinite(total.item()):
                raise RuntimeError(f"non-finite loss at step {step}: {total.item()}")
            grads = backward(total, tape)
            grad_norm = clip_global_norm(grads, cfg.grad_clip)
            opt.step(params, grads)

            if metrics_file:
                metrics_file.write(json.dumps(
                    {"step": step, "l_diff": l_diff.item(), "l_ref": l_ref.item(),
                     "l_total": total.item(), "alpha": cfg.alpha, "beta": beta,
                     "grad_norm": grad_norm}) + "\n")
            if not quiet and (step % LOG_EVERY == 0 or step == cfg.steps - 1):
                print(f"step {step}: l_diff={l_diff.item():.4f} "
                      f"l_ref={l_ref.item():.4f}", file=sys.stderr)
    finally:
        if metrics_file:
            metrics_file.close()

    save_checkpoint(out_path, model.to_arrays(), cfg, cfg.steps)
    return out_path
