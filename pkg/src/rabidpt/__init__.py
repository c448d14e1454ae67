"""Dissipative phase transitions of the parametrically amplified open quantum Rabi model."""

__version__ = "0.1.0"

from .core import Branch, ModelParams, critical_mu, raw_rates  # noqa: E402
from .errors import RabiError  # noqa: E402

__all__ = ["Branch", "ModelParams", "RabiError", "critical_mu", "raw_rates", "__version__"]
