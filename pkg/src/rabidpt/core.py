"""Parameter model and unit conventions.

Couplings are stored in normalized form.  With boson frequency w0 and
frequency ratio eta the raw quantities are

    Omega  = eta * w0
    lambda = g * sqrt(w0 * Omega) / 2
    kappa1 = gamma1 * w0
    kappa2 = gamma2 * w0 / eta
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import NamedTuple

from .errors import ConfigError


class RawRates(NamedTuple):
    Omega: float
    lam: float
    kappa1: float
    kappa2: float


class Branch(enum.Enum):
    """Adiabatic spin branch; MINUS is the s_z <= 0 (low-energy) branch."""

    PLUS = 1
    MINUS = -1

    @property
    def sign(self) -> int:
        return self.value

    @classmethod
    def parse(cls, value) -> "Branch":
        if isinstance(value, Branch):
            return value
        key = str(value).strip().lower()
        if key in ("+", "plus", "p", "+1", "1"):
            return cls.PLUS
        if key in ("-", "minus", "m", "-1"):
            return cls.MINUS
        raise ConfigError(f"unknown branch {value!r}")


@dataclass(frozen=True)
class ModelParams:
    omega0: float = 1.0
    eta: float = 100.0
    mu: float = 0.0
    g: float = 0.0
    gamma1: float = 1.0
    gamma2: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{f.name} must be a real number, got {v!r}")
            if not math.isfinite(v):
                raise ConfigError(f"{f.name} must be finite, got {v!r}")
            object.__setattr__(self, f.name, float(v))
        if self.omega0 <= 0:
            raise ConfigError("omega0 must be > 0")
        if self.eta <= 0:
            raise ConfigError("eta must be > 0")
        if self.g < 0:
            raise ConfigError("g must be >= 0")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ConfigError("gamma1 and gamma2 must be >= 0")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @property
    def rates(self) -> RawRates:
        return raw_rates(self)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown parameter keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_raw(cls, omega0, Omega, lam, kappa1, kappa2, mu=0.0) -> "ModelParams":
        eta = Omega / omega0
        return cls(
            omega0=omega0,
            eta=eta,
            mu=mu,
            g=2.0 * lam / math.sqrt(omega0 * Omega),
            gamma1=kappa1 / omega0,
            gamma2=kappa2 * eta / omega0,
        )


def raw_rates(p: ModelParams) -> RawRates:
    Omega = p.eta * p.omega0
    return RawRates(
        Omega=Omega,
        lam=p.g * math.sqrt(p.omega0 * Omega) / 2.0,
        kappa1=p.gamma1 * p.omega0,
        kappa2=p.gamma2 * p.omega0 / p.eta,
    )


def critical_mu(p: ModelParams) -> float:
    """Boundary of the inverted regime, mu_c = sqrt(1 + gamma1^2)."""
    return math.hypot(1.0, p.gamma1)
