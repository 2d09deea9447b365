from repdiff.denoiser.config import DenoiserConfig, INJECTION_MODES
from repdiff.denoiser.unet import (
    DenoiserHandle,
    build_denoiser,
    count_receptive_conditioning,
    init_params,
    param_specs,
    predict_noise,
)

__all__ = [
    "DenoiserConfig",
    "DenoiserHandle",
    "INJECTION_MODES",
    "build_denoiser",
    "count_receptive_conditioning",
    "init_params",
    "param_specs",
    "predict_noise",
]
