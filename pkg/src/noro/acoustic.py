"""Acoustic score model: CNN source encoder + gated dilated conv backbone.

The backbone is conditioned per block through prompt attention into a FiLM
head (the timbre path) and additively through a sinusoidal time embedding.
Internally the network predicts in noise units and is rescaled by
-1/sqrt(variance(t)), which keeps the regression well-conditioned near t=0;
the exposed output is still the score estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .diffusion import T_MIN, NoiseSchedule, perturbation_coefficients
from .dsp import NormalizedF0
from .layers import ParamBank, attention, conv1d_same, film, linear, time_embedding
from .semantic import FeatureSequence


@dataclass
class BackboneConfig:
    n_blocks: int = 6
    dilations: tuple[int, ...] = (1, 2, 4, 1, 2, 4)
    d: int = 128
    kernel: int = 3

    def __post_init__(self):
        if self.n_blocks < 1 or len(self.dilations) != self.n_blocks:
            raise ValueError("need one positive dilation per block")
        if any(r < 1 for r in self.dilations):
            raise ValueError("dilations must be positive")


class SourceEncoder:
    """Fuses semantic features and normalized pitch into (T, d) h_src."""

    def __init__(self, rng: np.random.Generator, feat_dim: int = 26, d: int = 128,
                 n_layers: int = 3, kernel: int = 3, prefix: str = "src"):
        self.d = d
        self.kernel = kernel
        self.n_layers = n_layers
        bank = ParamBank(rng)
        c_in = feat_dim + 1
        for i in range(n_layers):
            bank.linear(f"{prefix}.conv{i}.w", kernel * c_in, d)
            bank.bias(f"{prefix}.conv{i}.b", d)
            c_in = d
        self.prefix = prefix
        self.params: dict[str, Parameter] = bank.params

    def encode(self, s_src: FeatureSequence, p_src: NormalizedF0) -> Tensor:
        pitch = align_frames(p_src.values, s_src.n_frames)
        x = Tensor(np.hstack([s_src.frames, pitch[:, None]]))
        for i in range(self.n_layers):
            x = ad.gelu(conv1d_same(x, self.params[f"{self.prefix}.conv{i}.w"],
                                    self.params[f"{self.prefix}.conv{i}.b"],
                                    self.kernel))
        return x


def align_frames(values: np.ndarray, n_frames: int) -> np.ndarray:
    """Nearest-frame resampling of a per-frame track to a target length."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0 or n_frames < 1:
        raise ValueError("cannot align an empty frame track")
    if values.size == n_frames:
        return values
    if n_frames == 1:
        return values[:1]
    idx = np.round(np.linspace(0.0, values.size - 1, n_frames)).astype(int)
    return values[idx]


def prompt_attention(backbone_hidden: Tensor, h_ref: Tensor,
                     params: dict[str, Parameter], prefix: str) -> Tensor:
    """Attention with backbone frames as queries and h_ref as keys/values."""
    if backbone_hidden.shape[1] != h_ref.shape[1]:
        raise ValueError("backbone and reference widths differ")
    q = linear(backbone_hidden, params[f"{prefix}.wq"], params[f"{prefix}.bq"])
    k = linear(h_ref, params[f"{prefix}.wk"], params[f"{prefix}.bk"])
    v = linear(h_ref, params[f"{prefix}.wv"], params[f"{prefix}.bv"])
    return linear(attention(q, k, v), params[f"{prefix}.wo"], params[f"{prefix}.bo"])


class ScoreNet:
    """WaveNet-style stack of gated dilated conv blocks with FiLM conditioning."""

    def __init__(self, rng: np.random.Generator, n_mels: int = 80,
                 cfg: BackboneConfig | None = None,
                 sched: NoiseSchedule | None = None, prefix: str = "net"):
        self.cfg = cfg or BackboneConfig()
        self.n_mels = n_mels
        self.sched = sched or NoiseSchedule()
        d, kernel = self.cfg.d, self.cfg.kernel
        bank = ParamBank(rng)
        bank.linear(f"{prefix}.zproj.w", n_mels, d)
        bank.bias(f"{prefix}.zproj.b", d)
        bank.linear(f"{prefix}.temb.w", d, d)
        bank.bias(f"{prefix}.temb.b", d)
        for i in range(self.cfg.n_blocks):
            blk = f"{prefix}.block{i}"
            for nm in ("wq", "wk", "wv", "wo"):
                bank.linear(f"{blk}.attn.{nm}", d, d)
            for nm in ("bq", "bk", "bv", "bo"):
                bank.bias(f"{blk}.attn.{nm}", d)
            bank.linear(f"{blk}.film.w", d, 2 * d)
            bank.bias(f"{blk}.film.b", 2 * d)
            bank.linear(f"{blk}.conv.w", kernel * d, 2 * d)
            bank.bias(f"{blk}.conv.b", 2 * d)
            bank.linear(f"{blk}.res.w", d, d)
            bank.bias(f"{blk}.res.b", d)
            bank.linear(f"{blk}.skip.w", d, d)
            bank.bias(f"{blk}.skip.b", d)
        bank.linear(f"{prefix}.out1.w", d, d)
        bank.bias(f"{prefix}.out1.b", d)
        bank.linear(f"{prefix}.out2.w", d, n_mels)
        bank.bias(f"{prefix}.out2.b", n_mels)
        self.prefix = prefix
        self.params: dict[str, Parameter] = bank.params

    def score_forward(self, z_t: np.ndarray, t: float, h_src: Tensor,
                      h_ref: Tensor) -> Tensor:
        z_t = np.asarray(z_t, dtype=np.float64)
        if z_t.ndim != 2 or z_t.shape[1] != self.n_mels:
            raise ValueError(f"expected ({'T'}, {self.n_mels}) input, got {z_t.shape}")
        if h_src.shape != (z_t.shape[0], self.cfg.d):
            raise ValueError("h_src frame count must match z_t")
        p = self.params
        d = self.cfg.d
        pre = self.prefix

        temb = linear(ad.reshape(time_embedding(t, d), (1, d)),
                      p[f"{pre}.temb.w"], p[f"{pre}.temb.b"])
        x = ad.add(ad.add(linear(Tensor(z_t), p[f"{pre}.zproj.w"], p[f"{pre}.zproj.b"]),
                          h_src), temb)
        skip_sum = None
        for i, dilation in enumerate(self.cfg.dilations):
            blk = f"{pre}.block{i}"
            cond = prompt_attention(x, h_ref, p, f"{blk}.attn")
            fs = linear(cond, p[f"{blk}.film.w"], p[f"{blk}.film.b"])
            scale = ad.add(ad.narrow(fs, 1, 0, d), 1.0)
            shift = ad.narrow(fs, 1, d, d)
            h = film(x, scale, shift)
            g = conv1d_same(h, p[f"{blk}.conv.w"], p[f"{blk}.conv.b"],
                            self.cfg.kernel, dilation)
            z = ad.mul(ad.tanh(ad.narrow(g, 1, 0, d)),
                       ad.sigmoid(ad.narrow(g, 1, d, d)))
            x = ad.add(x, linear(z, p[f"{blk}.res.w"], p[f"{blk}.res.b"]))
            s = linear(z, p[f"{blk}.skip.w"], p[f"{blk}.skip.b"])
            skip_sum = s if skip_sum is None else ad.add(skip_sum, s)

        out = ad.relu(linear(ad.relu(skip_sum), p[f"{pre}.out1.w"], p[f"{pre}.out1.b"]))
        raw = linear(out, p[f"{pre}.out2.w"], p[f"{pre}.out2.b"])
        _, variance = perturbation_coefficients(max(t, T_MIN), self.sched)
        return ad.mul(raw, -1.0 / np.sqrt(variance))
