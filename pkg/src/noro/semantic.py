"""Semantic features: cepstral frame extractor plus K-means quantization.

The extractor is a deterministic stand-in behind the same interface a
learned frame-level model would present; everything downstream only sees
(T, D) feature matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .dsp import FrameSpec, Waveform, mel_spectrogram

N_CEPSTRA = 13
FEATURE_DIM = 2 * N_CEPSTRA  # cepstra + deltas

KMEANS_MAX_ITERS = 300
KMEANS_REL_TOL = 1e-6


@dataclass
class FeatureSequence:
    frames: np.ndarray  # (T, D)
    hop: int = 256

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError("features must be a (T, D) matrix")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("features contain non-finite values")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class Codebook:
    centroids: np.ndarray  # (k, D)
    objective_history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise ValueError("codebook needs at least one centroid")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids contain non-finite values")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def extract_semantic(w: Waveform, spec: FrameSpec | None = None) -> FeatureSequence:
    """13 mel-cepstral coefficients + central-difference deltas (D = 26)."""
    mel = mel_spectrogram(w, spec)
    ceps = dct(mel.frames, type=2, norm="ortho", axis=1)[:, :N_CEPSTRA]
    padded = np.vstack([ceps[:1], ceps, ceps[-1:]])
    deltas = (padded[2:] - padded[:-2]) / 2.0
    return FeatureSequence(np.hstack([ceps, deltas]), mel.frame_spec.hop)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """(N, k) squared Euclidean distances."""
    d2 = (np.sum(x * x, axis=1)[:, None] - 2.0 * x @ c.T + np.sum(c * c, axis=1)[None, :])
    return np.maximum(d2, 0.0)


def _seed_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centroids[j]) ** 2, axis=1))
    return centroids


def kmeans_fit(features: np.ndarray, k: int, rng: np.random.Generator) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding.

    Runs until the relative objective change drops below 1e-6 or 300
    iterations; empty clusters are reseeded with the point farthest from its
    assigned centroid, which keeps the per-iteration objective non-increasing.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a (N, D) matrix")
    if np.unique(x, axis=0).shape[0] < k:
        raise ValueError(f"need at least {k} distinct points to fit {k} clusters")

    centroids = _seed_plusplus(x, k, rng)
    history: list[float] = []
    prev = np.inf
    for _ in range(KMEANS_MAX_ITERS):
        d2 = _sq_dists(x, centroids)
        assign = np.argmin(d2, axis=1)
        obj = float(np.sum(np.take_along_axis(d2, assign[:, None], axis=1)))
        history.append(obj)
        if prev < np.inf and prev - obj <= KMEANS_REL_TOL * max(prev, 1e-300):
            break
        prev = obj

        new_centroids = centroids.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new_centroids[j] = x[members].mean(axis=0)
        empty = [j for j in range(k) if not np.any(assign == j)]
        if empty:
            point_d2 = np.take_along_axis(d2, assign[:, None], axis=1).ravel().copy()
            for j in empty:
                far = int(np.argmax(point_d2))
                new_centroids[j] = x[far]
                point_d2[far] = -1.0
        centroids = new_centroids

    return Codebook(centroids, objective_history=history)


def quantize_continuous(features: FeatureSequence, cb: Codebook) -> FeatureSequence:
    """Replace each frame by its nearest centroid vector (not a cluster ID)."""
    if features.dim != cb.dim:
        raise ValueError(f"feature dim {features.dim} != codebook dim {cb.dim}")
    assign = np.argmin(_sq_dists(features.frames, cb.centroids), axis=1)
    return FeatureSequence(cb.centroids[assign].copy(), features.hop)
