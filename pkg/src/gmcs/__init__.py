"""Modeling and simulation toolkit for GMCS quantum key distribution."""

from .keyrate import (
    DomainError,
    KeyRateResult,
    NoiseBudget,
    SystemParameters,
    secure_key_rate,
)
from .simulator import ScenarioConfig, SessionData, run_session

__all__ = [
    "DomainError",
    "KeyRateResult",
    "NoiseBudget",
    "ScenarioConfig",
    "SessionData",
    "SystemParameters",
    "run_session",
    "secure_key_rate",
]
