"""Denoiser architecture hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from repdiff.errors import ValidationError

INJECTION_MODES = ("add_after_norm", "concat_to_time")


@dataclass(frozen=True)
class DenoiserConfig:
    image_channels: int
    image_size: int
    cond_dim: int
    base_width: int = 64
    depth: int = 2
    time_embed_dim: int = 64
    injection: str = "add_after_norm"

    def validate(self) -> None:
        if self.image_channels < 1:
            raise ValidationError("image_channels must be >= 1")
        if self.depth < 1:
            raise ValidationError("depth must be >= 1")
        if self.image_size < 1 or self.image_size % (2**self.depth) != 0:
            raise ValidationError(
                f"image_size {self.image_size} must be divisible by 2^depth = {2**self.depth}"
            )
        if self.base_width < 1:
            raise ValidationError("base_width must be >= 1")
        if self.cond_dim < 1:
            raise ValidationError("cond_dim must be >= 1")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2 != 0:
            raise ValidationError("time_embed_dim must be an even integer >= 2")
        if self.injection not in INJECTION_MODES:
            raise ValidationError(
                f"injection must be one of {INJECTION_MODES}, got {self.injection!r}"
            )

    @property
    def time_hidden(self) -> int:
        return 2 * self.time_embed_dim

    def stage_channels(self) -> list[int]:
        """Output channels per down stage: [base_width * 2^(i-1) for i=1..depth]."""
        return [self.base_width * 2 ** (i - 1) for i in range(1, self.depth + 1)]

    def to_manifest(self) -> dict:
        return asdict(self)

    @classmethod
    def from_manifest(cls, manifest: dict) -> "DenoiserConfig":
        cfg = cls(**{k: manifest[k] for k in cls.__dataclass_fields__})
        cfg.validate()
        return cfg
