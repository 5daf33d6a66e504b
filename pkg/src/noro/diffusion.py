"""Variance-preserving SDE: forward kernel, score targets, reverse sampler.

The perturbation kernel is z_t = e^{-B(t)/2} z_0 + sqrt(1 - e^{-B(t)}) eps
with B(t) the integrated linear schedule, so mean_coef^2 + variance == 1
identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

T_MIN = 1e-4


@dataclass
class NoiseSchedule:
    beta0: float = 0.05
    beta1: float = 20.0

    def __post_init__(self):
        if self.beta0 <= 0 or self.beta1 <= 0:
            raise ValueError("schedule endpoints must be positive")

    def beta(self, t: float) -> float:
        return self.beta0 + t * (self.beta1 - self.beta0)

    def integral(self, t: float) -> float:
        """B(t) = integral of beta over [0, t]."""
        return self.beta0 * t + (self.beta1 - self.beta0) * t * t / 2.0


@dataclass
class DiffusionState:
    t: float
    z: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"diffusion time {self.t} outside [0, 1]")
        self.z = np.asarray(self.z, dtype=np.float64)
        if not np.all(np.isfinite(self.z)):
            raise ValueError("diffusion state contains non-finite values")


# score_fn(z_t, t, h_src, h_ref) -> score shaped like z_t
ScoreFn = Callable[..., np.ndarray]


def perturbation_coefficients(t: float, sched: NoiseSchedule) -> tuple[float, float]:
    """(mean_coef, variance) of the forward kernel at time t."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"diffusion time {t} outside [0, 1]")
    b = sched.integral(t)
    mean_coef = float(np.exp(-0.5 * b))
    variance = float(-np.expm1(-b))
    return mean_coef, variance


def forward_perturb(z0: np.ndarray, t: float, sched: NoiseSchedule,
                    rng: np.random.Generator) -> DiffusionState:
    """Draw z_t = mean_coef * z0 + sqrt(variance) * eps."""
    z0 = np.asarray(z0, dtype=np.float64)
    mean_coef, variance = perturbation_coefficients(t, sched)
    eps = rng.standard_normal(z0.shape)
    return DiffusionState(t, mean_coef * z0 + np.sqrt(variance) * eps)


def true_score(z_t: np.ndarray, z0: np.ndarray, t: float,
               sched: NoiseSchedule) -> np.ndarray:
    """Score of the conditional kernel: -(z_t - mean_coef z0) / variance."""
    mean_coef, variance = perturbation_coefficients(t, sched)
    if variance <= 0.0:
        raise ValueError("score undefined at zero variance")
    return -(np.asarray(z_t) - mean_coef * np.asarray(z0)) / variance


def diffusion_loss(score_fn, z0: np.ndarray, t: float, h_src, h_ref,
                   sched: NoiseSchedule, rng: np.random.Generator):
    """Elementwise-mean L1 between the model score and the kernel score.

    Returns a Tensor when score_fn does (training path), otherwise a float.
    """
    if not T_MIN <= t <= 1.0:
        raise ValueError(f"diffusion time {t} outside [{T_MIN}, 1]")
    state = forward_perturb(z0, t, sched, rng)
    target = true_score(state.z, z0, t, sched)
    pred = score_fn(state.z, t, h_src, h_ref)
    if isinstance(pred, Tensor):
        return ad.tmean(ad.absolute(ad.sub(pred, Tensor(target))))
    return float(np.mean(np.abs(pred - target)))


def reverse_step(state: DiffusionState, score: np.ndarray, dt: float,
                 sched: NoiseSchedule, rng: np.random.Generator,
                 add_noise: bool = True) -> DiffusionState:
    """One Euler-Maruyama update backward in time from state.t to state.t - dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.t - dt < -1e-12:
        raise ValueError("reverse step would go past t = 0")
    beta = sched.beta(state.t)
    z = state.z + beta * (0.5 * state.z + np.asarray(score)) * dt
    if add_noise:
        z = z + np.sqrt(beta * dt) * rng.standard_normal(state.z.shape)
    return DiffusionState(max(state.t - dt, 0.0), z)


def sample(score_fn, h_src, h_ref, shape: tuple[int, ...], n_steps: int,
           sched: NoiseSchedule, rng: np.random.Generator,
           t_min: float = T_MIN) -> np.ndarray:
    """Reverse-sample from N(0, I) at t = 1 down to t_min.

    Uniform step grid; noise is injected on every step except the last.
    """
    if n_steps < 1:
        raise ValueError("need at least one reverse step")
    state = DiffusionState(1.0, rng.standard_normal(shape))
    dt = (1.0 - t_min) / n_steps
    for k in range(n_steps):
        score = score_fn(state.z, state.t, h_src, h_ref)
        last = k == n_steps - 1
        state = reverse_step(state, score, dt, sched, rng, add_noise=not last)
    return state.z
