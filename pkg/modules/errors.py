from __future__ import annotations

from .error_codes import (
    CHECK_FAILED,
    CONFIG_DOMAIN_VIOLATION,
    CONFIG_INVALID_VALUE,
    ERROR_CODE_CATALOG,
    MODEL_RATE_BOUND_EXCEEDED,
    NUMERIC_RUNAWAY_POPULATION,
    NUMERIC_STABILITY_VIOLATED,
)


class SimulationError(Exception):
    """Base error carrying a catalog code."""

    default_code = CONFIG_INVALID_VALUE

    def __init__(self, message: str, code: int | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.code = code if code is not None else self.default_code

    def __reduce__(self):
        # keeps the code when errors cross a process pool
        return (self.__class__, (self.message, self.code))

    @property
    def exit_status(self) -> int:
        return int(ERROR_CODE_CATALOG.get(self.code, {}).get("exit_status", 1))

    @property
    def name(self) -> str:
        return str(ERROR_CODE_CATALOG.get(self.code, {}).get("name", "UNKNOWN"))


class ConfigError(SimulationError, ValueError):
    default_code = CONFIG_INVALID_VALUE


class DomainError(SimulationError, ValueError):
    default_code = CONFIG_DOMAIN_VIOLATION


class RateBoundError(SimulationError):
    default_code = MODEL_RATE_BOUND_EXCEEDED


class NumericalError(SimulationError, ArithmeticError):
    default_code = NUMERIC_STABILITY_VIOLATED


class RunawayPopulationError(NumericalError):
    default_code = NUMERIC_RUNAWAY_POPULATION


class AcceptanceError(SimulationError):
    default_code = CHECK_FAILED
