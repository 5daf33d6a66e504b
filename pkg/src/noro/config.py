"""Training configuration and its flat key-value file format."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

MODES = ("baseline", "noro")
SEED_ENV_VAR = "NORO_SEED"


@dataclass
class TrainConfig:
    alpha: float = 1.0      # diffusion-loss weight
    beta: float = 0.25      # contrastive-loss weight (forced to 0 in baseline mode)
    tau: float = 0.1
    m: int = 32             # reference query count
    d: int = 128            # model width
    k: int = 64             # semantic codebook size
    batch_size: int = 8
    steps: int = 2000
    lr: float = 1e-3
    momentum: float = 0.9
    grad_clip: float = 1.0  # global-norm clip; 0 disables
    seed: int = 0
    mode: str = "baseline"
    n_mels: int = 80
    ref_layers: int = 2
    ref_heads: int = 4
    ffn_mult: int = 2
    n_blocks: int = 6
    kernel: int = 3
    beta0: float = 0.05
    beta1: float = 20.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "noro" and self.batch_size < 2:
            raise ValueError("noro mode needs batch_size >= 2")
        if self.tau <= 0 or self.lr <= 0:
            raise ValueError("tau and lr must be positive")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")

    def asdict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(TrainConfig)}


def write_config(path, cfg: TrainConfig):
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(TrainConfig)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_config(path) -> TrainConfig:
    """Parse `key = value` lines; blank lines and # comments are skipped."""
    defaults = TrainConfig()
    casts = {f.name: type(getattr(defaults, f.name)) for f in fields(TrainConfig)}
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line {lineno}: {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in casts:
            raise ValueError(f"unknown config key {key!r} at line {lineno}")
        values[key] = casts[key](raw)
    return TrainConfig(**values)


def apply_seed_override(cfg: TrainConfig) -> TrainConfig:
    """NORO_SEED in the environment overrides the configured seed."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is not None:
        cfg.seed = int(raw)
    return cfg
