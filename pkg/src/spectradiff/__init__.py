"""Spectrum-conditioned diffusion imputation for irregularly sampled series."""

from .data import (ConditionalSplit, NormalizationStats, TimeSeriesBatch,
                   denormalize, make_conditional_split, normalize)
from .lombscargle import (FapAnnotation, FrequencyGrid, Periodogram,
                          compute_tau, default_grid, false_alarm_probability,
                          fft_psd_with_fill, ls_oracle, periodogram,
                          periodogram_arrays, periodogram_vjp,
                          spectral_feature)
from .missingness import MissingnessSpec, apply_missingness
from .sines import SineChannelSpec, default_channel_specs, generate_sines

__all__ = [
    "ConditionalSplit", "NormalizationStats", "TimeSeriesBatch",
    "denormalize", "make_conditional_split", "normalize",
    "FapAnnotation", "FrequencyGrid", "Periodogram", "compute_tau",
    "default_grid", "false_alarm_probability", "fft_psd_with_fill",
    "ls_oracle", "periodogram", "periodogram_arrays", "periodogram_vjp",
    "spectral_feature", "MissingnessSpec", "apply_missingness",
    "SineChannelSpec", "default_channel_specs", "generate_sines",
]
