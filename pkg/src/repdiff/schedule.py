"""Noise schedules for the forward diffusion process.

Tables are indexed by timestep t = 1..T; the t = 0 convention is
alpha_bar(0) = 1, i.e. clean data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from repdiff.errors import ValidationError

SCHEDULE_KINDS = ("linear", "cosine")

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02

_COSINE_OFFSET = 0.008


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep variance plan: betas, alphas and their running product."""

    kind: str
    T: int
    betas: np.ndarray
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)

    def beta(self, t: int) -> float:
        self._check_t(t, low=1)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_t(t, low=1)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        self._check_t(t, low=0)
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def _check_t(self, t: int, low: int) -> None:
        if not low <= t <= self.T:
            raise ValidationError(f"timestep {t} outside [{low}, {self.T}]")

    def validate(self) -> None:
        """Re-check every table invariant; raises ValidationError on violation."""
        if self.T < 1:
            raise ValidationError("T must be >= 1")
        for name, arr in (("betas", self.betas), ("alphas", self.alphas), ("alpha_bars", self.alpha_bars)):
            if arr.shape != (self.T,):
                raise ValidationError(f"{name} must have shape ({self.T},)")
        if not ((self.betas > 0) & (self.betas < 1)).all():
            raise ValidationError("betas must lie in (0, 1)")
        if not np.allclose(self.alphas, 1.0 - self.betas, rtol=0, atol=0):
            raise ValidationError("alphas must equal 1 - betas")
        if not (np.diff(np.concatenate(([1.0], self.alpha_bars))) < 0).all():
            raise ValidationError("alpha_bars must be strictly decreasing from 1")
        recomputed = np.cumprod(1.0 - self.betas)
        rel = np.abs(recomputed - self.alpha_bars) / recomputed
        if rel.max() > 1e-12:
            raise ValidationError("alpha_bars inconsistent with betas")

    def to_manifest(self) -> dict:
        return {
            "kind": self.kind,
            "T": self.T,
            "beta_start": float(self.betas[0]),
            "beta_end": float(self.betas[-1]),
        }


def make_schedule(
    kind: str = "linear",
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Build a validated schedule. Linear kind spaces betas from beta_start
    to beta_end inclusive; cosine kind ignores the beta bounds."""
    if T < 1:
        raise ValidationError(f"T must be >= 1, got {T}")
    if kind == "linear":
        if not (0 < beta_start <= beta_end < 1):
            raise ValidationError(
                f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
            )
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    elif kind == "cosine":
        s = _COSINE_OFFSET
        ts = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((ts + s) / (1 + s) * math.pi / 2) ** 2
        bars = f / f[0]
        betas = np.clip(1.0 - bars[1:] / bars[:-1], 1e-8, 0.999)
    else:
        raise ValidationError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    sched = NoiseSchedule(kind=kind, T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)
    sched.validate()
    return sched


def schedule_from_manifest(manifest: dict) -> NoiseSchedule:
    return make_schedule(
        kind=manifest["kind"],
        T=int(manifest["T"]),
        beta_start=float(manifest["beta_start"]),
        beta_end=float(manifest["beta_end"]),
    )
