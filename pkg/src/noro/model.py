"""Assembles the trainable components plus their non-trainable companions.

A VcModel owns the source encoder, reference encoder, and score net (one
shared parameter set regardless of training mode) along with the semantic
codebook and the mel normalization statistics that every model-facing mel
passes through.
"""

from __future__ import annotations

import itertools

import numpy as np

from .acoustic import BackboneConfig, ScoreNet, SourceEncoder
from .autodiff import Parameter, Tensor
from .checkpoint import load_checkpoint
from .config import TrainConfig
from .diffusion import NoiseSchedule
from .dsp import MelSpectrogram
from .reference import ReferenceEncoder
from .semantic import FEATURE_DIM, Codebook

DILATION_CYCLE = (1, 2, 4)
MEL_STD_FLOOR = 1e-3


class VcModel:
    def __init__(self, cfg: TrainConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.sched = NoiseSchedule(cfg.beta0, cfg.beta1)
        dilations = tuple(itertools.islice(itertools.cycle(DILATION_CYCLE), cfg.n_blocks))
        self.source_enc = SourceEncoder(rng, feat_dim=FEATURE_DIM, d=cfg.d,
                                        kernel=cfg.kernel)
        self.ref_enc = ReferenceEncoder(rng, n_mels=cfg.n_mels, d=cfg.d, m=cfg.m,
                                        n_layers=cfg.ref_layers, n_heads=cfg.ref_heads,
                                        ffn_mult=cfg.ffn_mult)
        self.score_net = ScoreNet(rng, n_mels=cfg.n_mels,
                                  cfg=BackboneConfig(cfg.n_blocks, dilations, cfg.d,
                                                     cfg.kernel),
                                  sched=self.sched)
        self.codebook: Codebook | None = None
        self.stats_fitted = False
        self.mel_mean = np.zeros(cfg.n_mels)
        self.mel_std = np.ones(cfg.n_mels)

    def parameters(self) -> dict[str, Parameter]:
        return {**self.source_enc.params, **self.ref_enc.params,
                **self.score_net.params}

    # -- mel normalization ---------------------------------------------------

    def fit_mel_stats(self, mel_frames: list[np.ndarray]):
        stacked = np.vstack(mel_frames)
        self.mel_mean = stacked.mean(axis=0)
        self.mel_std = np.maximum(stacked.std(axis=0), MEL_STD_FLOOR)
        self.stats_fitted = True

    def normalize_mel(self, frames: np.ndarray) -> np.ndarray:
        return (frames - self.mel_mean) / self.mel_std

    def denormalize_mel(self, frames: np.ndarray) -> np.ndarray:
        return frames * self.mel_std + self.mel_mean

    def normalized_mel(self, mel: MelSpectrogram) -> MelSpectrogram:
        return MelSpectrogram(self.normalize_mel(mel.frames), mel.frame_spec)

    # -- sampling ------------------------------------------------------------

    def sampler_score_fn(self):
        """Inference-side score closure operating on plain arrays."""

        def fn(z_t: np.ndarray, t: float, h_src: Tensor, h_ref: Tensor) -> np.ndarray:
            return self.score_net.score_forward(z_t, t, h_src, h_ref).data

        return fn

    # -- persistence ---------------------------------------------------------

    def to_arrays(self) -> dict[str, np.ndarray]:
        arrays = {name: p.data for name, p in self.parameters().items()}
        if self.codebook is not None:
            arrays["codebook.centroids"] = self.codebook.centroids
        arrays["stats.mel_mean"] = self.mel_mean
        arrays["stats.mel_std"] = self.mel_std
        return arrays

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise ValueError(f"checkpoint is missing parameters: {sorted(missing)[:5]}")
        for name, p in params.items():
            arr = arrays[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{arr.shape} vs {p.data.shape}")
            p.data = arr.copy()
        if "codebook.centroids" in arrays:
            self.codebook = Codebook(arrays["codebook.centroids"].copy())
        self.mel_mean = arrays["stats.mel_mean"].copy()
        self.mel_std = arrays["stats.mel_std"].copy()
        self.stats_fitted = True


def model_from_checkpoint(path) -> tuple[VcModel, TrainConfig, int]:
    arrays, cfg, step = load_checkpoint(path)
    model = VcModel(cfg, np.random.default_rng(cfg.seed))
    model.load_arrays(arrays)
    return model, cfg, step
