"""Python access to the kinetic diffusion-approximation core."""

from ._kda import (
    AdmissibilityError,
    ConfigError,
    coefficients,
    derive_seed,
    simulate_kinetic,
    simulate_spde,
    validate,
)

__all__ = [
    "AdmissibilityError",
    "ConfigError",
    "coefficients",
    "derive_seed",
    "simulate_kinetic",
    "simulate_spde",
    "validate",
]
