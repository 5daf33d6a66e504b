"""Speaker-verification and noise-robustness evaluation of trained checkpoints."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.metrics import silhouette_score

from .augment import mix_at_snr
from .dsp import FrameSpec, Waveform, mel_spectrogram, read_wav
from .manifest import Manifest, load_manifest
from .model import VcModel, model_from_checkpoint
from .speaker_eval import TrialScore, compute_eer, cosine_score, read_trial_list, speaker_embedding

SNR_BANDS: tuple[tuple[str, tuple[float, float] | None], ...] = (
    ("clean", None), ("0-5", (0.0, 5.0)), ("5-10", (5.0, 10.0)))


def embed_waveform(model: VcModel, wav: Waveform) -> np.ndarray:
    mel = model.normalized_mel(mel_spectrogram(wav, FrameSpec()))
    return speaker_embedding(mel, model.ref_enc)


def eval_sv(ckpt_path, trials_path, out_path=None) -> dict:
    """Cosine-score every trial pair and report the EER as JSON."""
    model, _, _ = model_from_checkpoint(ckpt_path)
    pairs = read_trial_list(trials_path)
    cache: dict[str, np.ndarray] = {}

    def embed(path: Path) -> np.ndarray:
        key = str(path)
        if key not in cache:
            cache[key] = embed_waveform(model, read_wav(path))
        return cache[key]

    trials = [TrialScore(str(e), str(t), cosine_score(embed(e), embed(t)), label)
              for label, e, t in pairs]
    result = compute_eer(trials)
    report = {"eer": result.eer, "threshold": result.threshold,
              "n_target": sum(t.label for t in trials),
              "n_nontarget": sum(not t.label for t in trials)}
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report, indent=2) + "\n")
    return report


def build_trials(manifest: Manifest, rng: np.random.Generator, n_target: int,
                 n_nontarget: int, out_path) -> Path:
    """Write a balanced same/different-speaker trial list over manifest wavs."""
    by_spk: dict[str, list] = {}
    for e in manifest.entries:
        by_spk.setdefault(e.speaker_id, []).append(e)
    speakers = sorted(by_spk)
    if len(speakers) < 2 or any(len(v) < 2 for v in by_spk.values()):
        raise ValueError("trial building needs >= 2 speakers with >= 2 utts each")

    lines = []
    for _ in range(n_target):
        spk = speakers[int(rng.integers(len(speakers)))]
        a, b = rng.choice(len(by_spk[spk]), size=2, replace=False)
        lines.append(f"1 {by_spk[spk][a].wav_path} {by_spk[spk][b].wav_path}")
    for _ in range(n_nontarget):
        sa, sb = rng.choice(len(speakers), size=2, replace=False)
        a = by_spk[speakers[sa]][int(rng.integers(len(by_spk[speakers[sa]])))]
        b = by_spk[speakers[sb]][int(rng.integers(len(by_spk[speakers[sb]])))]
        lines.append(f"0 {a.wav_path} {b.wav_path}")
    out_path = Path(out_path)
    out_path.write_text("\n".join(lines) + "\n")
    return out_path


def _band_report(model: VcModel, clean_embs: np.ndarray, noisy_embs: np.ndarray | None,
                 labels: np.ndarray) -> dict:
    if noisy_embs is None:  # clean band: no counterpart to compare against
        return {"mean_clean_noisy_cosine": 1.0,
                "mean_centroid_distance": 0.0,
                "silhouette": float(silhouette_score(clean_embs, labels))}
    cosines = [cosine_score(c, n) for c, n in zip(clean_embs, noisy_embs)]
    dists = []
    for spk in np.unique(labels):
        sel = labels == spk
        dists.append(float(np.linalg.norm(clean_embs[sel].mean(axis=0)
                                          - noisy_embs[sel].mean(axis=0))))
    pooled = np.vstack([clean_embs, noisy_embs])
    pooled_labels = np.concatenate([labels, labels])
    return {"mean_clean_noisy_cosine": float(np.mean(cosines)),
            "mean_centroid_distance": float(np.mean(dists)),
            "silhouette": float(silhouette_score(pooled, pooled_labels))}


def eval_robustness(ckpt_a, ckpt_b, manifest_path, out_path=None, seed: int = 0,
                    snr_bands=SNR_BANDS) -> dict:
    """Compare two checkpoints' embedding geometry per SNR band.

    The noisy mixtures are drawn once and shared across both checkpoints, so
    the comparison isolates the models.
    """
    manifest = load_manifest(manifest_path)
    if manifest.noise_dir is None:
        raise ValueError("robustness evaluation requires a noise_dir in the manifest")
    noise_clips = [read_wav(p) for p in sorted(manifest.noise_dir.glob("*.wav"))]
    if not noise_clips:
        raise ValueError(f"no noise clips found in {manifest.noise_dir}")

    rng = np.random.default_rng(seed)
    wavs = [read_wav(e.wav_path) for e in manifest.entries]
    speakers = {s: i for i, s in enumerate(manifest.speakers())}
    labels = np.array([speakers[e.speaker_id] for e in manifest.entries])

    mixtures: dict[str, list[Waveform] | None] = {}
    for band, rng_range in snr_bands:
        if rng_range is None:
            mixtures[band] = None
            continue
        mixed = []
        for w in wavs:
            snr = float(rng.uniform(*rng_range))
            clip = noise_clips[int(rng.integers(len(noise_clips)))]
            mixed.append(mix_at_snr(w, clip, snr, rng))
        mixtures[band] = mixed

    reports = {}
    for tag, ckpt in (("checkpoint_a", ckpt_a), ("checkpoint_b", ckpt_b)):
        model, _, _ = model_from_checkpoint(ckpt)
        clean_embs = np.vstack([embed_waveform(model, w) for w in wavs])
        bands = {}
        for band, _ in snr_bands:
            noisy = mixtures[band]
            noisy_embs = None if noisy is None else np.vstack(
                [embed_waveform(model, w) for w in noisy])
            bands[band] = _band_report(model, clean_embs, noisy_embs, labels)
        reports[tag] = {"checkpoint": str(ckpt), "bands": bands}

    if out_path is not None:
        Path(out_path).write_text(json.dumps(reports, indent=2) + "\n")
    return reports
