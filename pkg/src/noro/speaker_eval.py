"""Speaker-verification scoring: embeddings, cosine trials, and EER."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import MelSpectrogram
from .reference import ReferenceEncoder


@dataclass
class TrialScore:
    enroll_id: str
    test_id: str
    score: float
    label: bool  # True for same-speaker (target) trials

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("trial score must be finite")


@dataclass
class LayerWeights:
    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if np.any(self.w < 0):
            raise ValueError("layer weights must be non-negative")
        if abs(self.w.sum() - 1.0) > 1e-12:
            raise ValueError("layer weights must sum to 1")


@dataclass
class EERResult:
    eer: float
    threshold: float

    def __post_init__(self):
        if not 0.0 <= self.eer <= 1.0:
            raise ValueError("EER must lie in [0, 1]")


def speaker_embedding(mel: MelSpectrogram, encoder: ReferenceEncoder) -> np.ndarray:
    """Mean-pooled last transformer-layer hidden state, L2-normalized."""
    hidden = encoder.hidden_layers(mel)[-1].data
    pooled = hidden.mean(axis=0)
    norm = np.linalg.norm(pooled)
    if norm == 0.0:
        raise ValueError("degenerate zero embedding")
    return pooled / norm


def weighted_layer_sum(hidden, weights: LayerWeights) -> np.ndarray:
    """Sum_l w_l * hidden_l over an (L, T, d) stack of layer states."""
    stack = np.asarray(hidden, dtype=np.float64)
    if stack.ndim != 3:
        raise ValueError("expected an (L, T, d) stack of hidden states")
    if weights.w.shape != (stack.shape[0],):
        raise ValueError("one weight per layer required")
    return np.tensordot(weights.w, stack, axes=1)


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine of a zero vector is undefined")
    return float(a @ b / (na * nb))


def compute_eer(trials: list[TrialScore]) -> EERResult:
    """Equal error rate with linear interpolation at the FAR/FRR crossing.

    FAR(th) is the fraction of nontarget scores >= th and FRR(th) the fraction
    of target scores < th; both are swept over the pooled score values.
    """
    tgt = np.sort([t.score for t in trials if t.label])
    non = np.sort([t.score for t in trials if not t.label])
    if tgt.size == 0 or non.size == 0:
        raise ValueError("need at least one target and one nontarget trial")

    all_scores = np.concatenate([tgt, non])
    thresholds = np.concatenate([[all_scores.min() - 1.0],
                                 np.unique(all_scores),
                                 [all_scores.max() + 1.0]])
    far = (non.size - np.searchsorted(non, thresholds, side="left")) / non.size
    frr = np.searchsorted(tgt, thresholds, side="left") / tgt.size
    if np.any(np.diff(far) > 0) or np.any(np.diff(frr) < 0):
        raise AssertionError("FAR/FRR sweep is not monotone")

    diff = far - frr
    idx = int(np.nonzero(diff <= 0)[0][0])
    if diff[idx] == 0.0 or idx == 0:
        return EERResult(float(far[idx]), float(thresholds[idx]))
    d1, d2 = diff[idx - 1], diff[idx]
    lam = d1 / (d1 - d2)
    eer = far[idx - 1] + lam * (far[idx] - far[idx - 1])
    threshold = thresholds[idx - 1] + lam * (thresholds[idx] - thresholds[idx - 1])
    return EERResult(float(eer), float(threshold))


def read_trial_list(path) -> list[tuple[bool, Path, Path]]:
    """Parse trial lines of the form `<label 0|1> <enroll-path> <test-path>`."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] not in ("0", "1"):
            raise ValueError(f"malformed trial at line {lineno}: {line!r}")
        out.append((parts[0] == "1", Path(parts[1]), Path(parts[2])))
    return out
