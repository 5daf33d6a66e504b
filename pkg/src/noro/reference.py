"""Reference encoder, dual-branch encoding, and the contrastive speaker loss.

The encoder is a small transformer over mel frames followed by a learned-query
attention block that pools the utterance into a fixed-length (m, d) timbre
representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .dsp import MelSpectrogram
from .layers import (ParamBank, attention, init_transformer_layer, l2_normalize_rows,
                     layer_norm, linear, sinusoidal_positions, transformer_layer)

QUERY_INIT_STD = 0.02
DEFAULT_TAU = 0.1


class ReferenceEncoder:
    """Transformer encoder + learned-query attention producing (m, d) h_ref."""

    def __init__(self, rng: np.random.Generator, n_mels: int = 80, d: int = 128,
                 m: int = 32, n_layers: int = 2, n_heads: int = 4,
                 ffn_mult: int = 2, prefix: str = "ref"):
        self.n_mels = n_mels
        self.d = d
        self.m = m
        self.n_layers = n_layers
        self.n_heads = n_heads
        bank = ParamBank(rng)
        bank.linear(f"{prefix}.inproj.w", n_mels, d)
        bank.bias(f"{prefix}.inproj.b", d)
        for i in range(n_layers):
            init_transformer_layer(bank, f"{prefix}.layer{i}", d, ffn_mult * d)
        bank.ones(f"{prefix}.ln_out.g", d)
        bank.bias(f"{prefix}.ln_out.b", d)
        bank.gaussian(f"{prefix}.queries", (m, d), QUERY_INIT_STD)
        for nm in ("wq", "wk", "wv", "wo"):
            bank.linear(f"{prefix}.qattn.{nm}", d, d)
        for nm in ("bq", "bk", "bv", "bo"):
            bank.bias(f"{prefix}.qattn.{nm}", d)
        self.prefix = prefix
        self.params: dict[str, Parameter] = bank.params

    def hidden_layers(self, mel: MelSpectrogram) -> list[Tensor]:
        """Per-layer (T, d) hidden sequences; the last one is final-LN output."""
        if mel.n_frames == 0:
            raise ValueError("empty mel input")
        p = self.params
        x = linear(Tensor(mel.frames), p[f"{self.prefix}.inproj.w"],
                   p[f"{self.prefix}.inproj.b"])
        x = ad.add(x, Tensor(sinusoidal_positions(mel.n_frames, self.d)))
        hiddens = []
        for i in range(self.n_layers):
            x = transformer_layer(x, p, f"{self.prefix}.layer{i}", self.n_heads)
            hiddens.append(x)
        final = layer_norm(x, p[f"{self.prefix}.ln_out.g"], p[f"{self.prefix}.ln_out.b"])
        hiddens[-1] = final
        return hiddens

    def encode(self, mel: MelSpectrogram) -> Tensor:
        """h_ref: m learned queries attending over the encoded mel frames."""
        hidden = self.hidden_layers(mel)[-1]
        p = self.params
        q = linear(p[f"{self.prefix}.queries"], p[f"{self.prefix}.qattn.wq"],
                   p[f"{self.prefix}.qattn.bq"])
        k = linear(hidden, p[f"{self.prefix}.qattn.wk"], p[f"{self.prefix}.qattn.bk"])
        v = linear(hidden, p[f"{self.prefix}.qattn.wv"], p[f"{self.prefix}.qattn.bv"])
        return linear(attention(q, k, v), p[f"{self.prefix}.qattn.wo"],
                      p[f"{self.prefix}.qattn.bo"])


def encode_reference(mel: MelSpectrogram, encoder: ReferenceEncoder) -> Tensor:
    return encoder.encode(mel)


def dual_branch_encode(clean: MelSpectrogram, noisy: MelSpectrogram,
                       encoder: ReferenceEncoder) -> tuple[Tensor, Tensor]:
    """Encode both branches with one shared parameter set (and queries)."""
    return encoder.encode(clean), encoder.encode(noisy)


def average_reprs(h_ref: Tensor, h_ref_noisy: Tensor) -> Tensor:
    if h_ref.shape != h_ref_noisy.shape:
        raise ValueError("branch representations must have matching shapes")
    return ad.mul(ad.add(h_ref, h_ref_noisy), 0.5)


@dataclass
class ContrastiveBatch:
    h_all: Tensor  # (2N, d): pooled clean block then pooled noisy block
    y_all: np.ndarray  # (2N,) speaker labels
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        self.y_all = np.asarray(self.y_all)
        n2 = self.h_all.shape[0]
        if n2 % 2 != 0 or self.y_all.shape != (n2,):
            raise ValueError("contrastive batch must hold matched clean/noisy blocks")
        n = n2 // 2
        if not np.array_equal(self.y_all[:n], self.y_all[n:]):
            raise ValueError("noisy block must repeat the clean block's speakers")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")


def pool_and_concat(h_refs: list[Tensor], h_refs_noisy: list[Tensor],
                    labels, tau: float = DEFAULT_TAU) -> ContrastiveBatch:
    """Average-pool each (m, d) item over m, then stack clean block + noisy block."""
    labels = np.asarray(labels)
    n = len(h_refs)
    if n < 2:
        raise ValueError("contrastive batch too small")
    if len(h_refs_noisy) != n or labels.shape != (n,):
        raise ValueError("clean, noisy, and label counts must match")
    pooled = [ad.tmean(h, axis=0, keepdims=True) for h in h_refs + h_refs_noisy]
    return ContrastiveBatch(ad.concat(pooled, axis=0),
                            np.concatenate([labels, labels]), tau)


def mask_matrix(labels) -> np.ndarray:
    """Binary same-speaker matrix: M[i, j] = 1 iff labels match."""
    y = np.asarray(labels)
    return (y[:, None] == y[None, :]).astype(np.float64)


def contrastive_speaker_loss(batch: ContrastiveBatch) -> Tensor:
    """Supervised contrastive loss over L2-normalized pooled representations.

    Self-pairs are excluded from both positives and the softmax denominator;
    each anchor averages -log p over its positive set, and the result is the
    mean over all 2N anchors.
    """
    n2 = batch.h_all.shape[0]
    mask = mask_matrix(batch.y_all)
    off_diag = 1.0 - np.eye(n2)
    pos_mask = mask * off_diag
    pos_counts = pos_mask.sum(axis=1)
    if np.any(pos_counts < 1):
        raise ValueError("every anchor needs at least one positive")

    h = l2_normalize_rows(batch.h_all)
    logits = ad.mul(ad.matmul(h, ad.transpose2d(h)), 1.0 / batch.tau)
    shifted = ad.sub(logits, ad.max_detached(logits, axis=1, keepdims=True))
    e = ad.mul(ad.exp(shifted), Tensor(off_diag))
    log_prob = ad.sub(shifted, ad.log(ad.tsum(e, axis=1, keepdims=True)))
    per_anchor = ad.div(ad.tsum(ad.mul(log_prob, Tensor(pos_mask)), axis=1),
                        Tensor(pos_counts))
    return ad.neg(ad.tmean(per_anchor))
