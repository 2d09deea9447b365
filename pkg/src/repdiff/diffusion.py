"""Forward noising, the epsilon-prediction loss, and reverse samplers.

All functions are pure; randomness enters only through explicit noise
arguments or seeds. Images live in [-1, 1] inside the diffusion process;
``to_model_range`` / ``from_model_range`` convert at module boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from repdiff.errors import DimensionMismatchError, NumericalError, ValidationError
from repdiff.schedule import NoiseSchedule

SAMPLERS = ("ddpm", "ddim")


@dataclass
class DiffusionSample:
    """An image (C, H, W) on the noising chain at timestep t."""

    data: np.ndarray
    t: int

    def validate(self, schedule: NoiseSchedule | None = None) -> None:
        if self.data.ndim != 3:
            raise ValidationError(f"expected (C, H, W) data, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise NumericalError("sample contains non-finite values")
        if self.t < 0 or (schedule is not None and self.t > schedule.T):
            raise ValidationError(f"timestep {self.t} out of range")


def to_model_range(img01: np.ndarray) -> np.ndarray:
    """[0, 1] image -> [-1, 1] diffusion-space tensor."""
    return img01.astype(np.float32) * 2.0 - 1.0


def from_model_range(x: np.ndarray) -> np.ndarray:
    """[-1, 1] diffusion-space tensor -> clipped [0, 1] image."""
    return np.clip((x + 1.0) / 2.0, 0.0, 1.0)


def forward_sample(
    x0: DiffusionSample, t: int, schedule: NoiseSchedule, noise: np.ndarray
) -> DiffusionSample:
    """Closed-form marginal x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) noise.

    t = 0 is the identity (alpha_bar(0) = 1 convention).
    """
    if x0.t != 0:
        raise ValidationError(f"forward_sample starts from clean data, got t={x0.t}")
    if not 0 <= t <= schedule.T:
        raise ValidationError(f"timestep {t} outside [0, {schedule.T}]")
    if noise.shape != x0.data.shape:
        raise DimensionMismatchError(
            f"noise shape {noise.shape} != data shape {x0.data.shape}"
        )
    if t == 0:
        return DiffusionSample(data=x0.data.copy(), t=0)
    ab = schedule.alpha_bar(t)
    data = math.sqrt(ab) * x0.data + math.sqrt(1.0 - ab) * noise
    return DiffusionSample(data=data, t=t)


def training_loss(eps_true: np.ndarray, eps_pred: np.ndarray) -> float:
    """Mean squared error over all elements."""
    if eps_true.shape != eps_pred.shape:
        raise DimensionMismatchError(
            f"shape mismatch: {eps_true.shape} vs {eps_pred.shape}"
        )
    diff = eps_pred.astype(np.float64) - eps_true.astype(np.float64)
    return float(np.mean(diff * diff))


def posterior_sigma(schedule: NoiseSchedule, t: int) -> float:
    """Ancestral-sampler noise scale: sigma_t^2 = beta_t (1-ab_{t-1}) / (1-ab_t)."""
    beta = schedule.beta(t)
    var = beta * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - schedule.alpha_bar(t))
    return math.sqrt(var)


def ddpm_step(
    x_t: DiffusionSample, eps_pred: np.ndarray, schedule: NoiseSchedule, z: np.ndarray
) -> DiffusionSample:
    """One ancestral reverse step t -> t-1.

    z is the injected Gaussian draw; sigma_1 = 0, so the chain terminates
    deterministically at t = 1 regardless of z.
    """
    t = x_t.t
    if not 1 <= t <= schedule.T:
        raise ValidationError(f"timestep {t} outside [1, {schedule.T}]")
    if eps_pred.shape != x_t.data.shape or z.shape != x_t.data.shape:
        raise DimensionMismatchError("eps_pred/z shape must match x_t")
    alpha = schedule.alpha(t)
    beta = schedule.beta(t)
    ab_t = schedule.alpha_bar(t)
    mean = (x_t.data - (beta / math.sqrt(1.0 - ab_t)) * eps_pred) / math.sqrt(alpha)
    data = mean + posterior_sigma(schedule, t) * z
    return DiffusionSample(data=data, t=t - 1)


def ddim_step(
    x_t: DiffusionSample, eps_pred: np.ndarray, schedule: NoiseSchedule, t_next: int
) -> DiffusionSample:
    """Deterministic (eta = 0) reverse step t -> t_next < t."""
    t = x_t.t
    if not 0 <= t_next < t <= schedule.T:
        raise ValidationError(f"need 0 <= t_next < t <= T, got t_next={t_next}, t={t}")
    if eps_pred.shape != x_t.data.shape:
        raise DimensionMismatchError("eps_pred shape must match x_t")
    ab_t = schedule.alpha_bar(t)
    ab_n = schedule.alpha_bar(t_next)
    x0_hat = (x_t.data - math.sqrt(1.0 - ab_t) * eps_pred) / math.sqrt(ab_t)
    data = math.sqrt(ab_n) * x0_hat + math.sqrt(1.0 - ab_n) * eps_pred
    return DiffusionSample(data=data, t=t_next)


def timestep_sequence(T: int, steps: int) -> list[int]:
    """Strictly decreasing chain T = t_0 > t_1 > ... > t_steps = 0."""
    if not 1 <= steps <= T:
        raise ValidationError(f"steps must lie in [1, T={T}], got {steps}")
    ts = np.round(np.linspace(T, 0, steps + 1)).astype(int)
    return [int(t) for t in ts]


def _ddpm_strided(x, eps_pred, schedule, t, t_next, z):
    """Ancestral step over a stride > 1, collapsing the skipped steps into
    one effective (alpha, beta) pair. Stride 1 reduces to ddpm_step."""
    ab_t = schedule.alpha_bar(t)
    ab_n = schedule.alpha_bar(t_next)
    alpha_eff = ab_t / ab_n
    beta_eff = 1.0 - alpha_eff
    x0_hat = (x - math.sqrt(1.0 - ab_t) * eps_pred) / math.sqrt(ab_t)
    mean = (
        math.sqrt(ab_n) * beta_eff / (1.0 - ab_t) * x0_hat
        + math.sqrt(alpha_eff) * (1.0 - ab_n) / (1.0 - ab_t) * x
    )
    var = beta_eff * (1.0 - ab_n) / (1.0 - ab_t)
    return mean + math.sqrt(var) * z


def _as_condition_array(condition) -> np.ndarray:
    values = getattr(condition, "values", condition)
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1:
        raise ValidationError(f"condition must be a vector, got shape {arr.shape}")
    return arr


def sample_batch(
    denoiser,
    conditions: np.ndarray,
    schedule: NoiseSchedule,
    sampler: str = "ddim",
    steps: int = 50,
    seed: int = 0,
) -> np.ndarray:
    """Run the reverse chain for a batch of conditioning vectors.

    Returns (n, C, H, W) float32 in model range. Every denoiser call sees
    its row's condition. Noise is drawn from one generator seeded with
    ``seed``: first the initial state, then one z per ddpm step.
    """
    if sampler not in SAMPLERS:
        raise ValidationError(f"unknown sampler {sampler!r}; expected one of {SAMPLERS}")
    cond = np.asarray(conditions, dtype=np.float32)
    if cond.ndim != 2:
        raise ValidationError(f"conditions must be (n, d), got shape {cond.shape}")
    cfg = denoiser.config
    if cond.shape[1] != cfg.cond_dim:
        raise DimensionMismatchError(
            f"condition dim {cond.shape[1]} != denoiser cond_dim {cfg.cond_dim}"
        )
    n = cond.shape[0]
    shape = (n, cfg.image_size, cfg.image_size, cfg.image_channels)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape).astype(np.float32)
    ts = timestep_sequence(schedule.T, steps)
    for t, t_next in zip(ts[:-1], ts[1:]):
        t_arr = np.full(n, t, dtype=np.int64)
        eps = denoiser.predict_batch(x, t_arr, cond)
        if sampler == "ddim":
            ab_t = schedule.alpha_bar(t)
            ab_n = schedule.alpha_bar(t_next)
            x0_hat = (x - math.sqrt(1.0 - ab_t) * eps) / math.sqrt(ab_t)
            x = math.sqrt(ab_n) * x0_hat + math.sqrt(1.0 - ab_n) * eps
        else:
            if t_next == 0:
                z = np.zeros(shape, dtype=np.float32)
            else:
                z = rng.standard_normal(shape).astype(np.float32)
            x = _ddpm_strided(x, eps, schedule, t, t_next, z)
    if not np.isfinite(x).all():
        raise NumericalError("sampler produced non-finite values")
    return np.moveaxis(x, -1, 1)


def sample(
    denoiser,
    condition,
    schedule: NoiseSchedule,
    sampler: str = "ddim",
    steps: int = 50,
    seed: int = 0,
) -> DiffusionSample:
    """Generate one image from a conditioning vector; see sample_batch."""
    cond = _as_condition_array(condition)
    out = sample_batch(denoiser, cond[None, :], schedule, sampler=sampler, steps=steps, seed=seed)
    return DiffusionSample(data=out[0], t=0)
