# src/errors.py
from __future__ import annotations

from typing import Sequence


class CsiHarError(RuntimeError):
    """Base class for every failure raised by the pipeline."""


# ---------- dataset ----------
class DatasetFormatError(CsiHarError):
    pass


class CorruptionError(CsiHarError):
    pass


class DomainError(CsiHarError, ValueError):
    pass


class DegenerateNormalizationError(CsiHarError):
    pass


class IdempotencyError(CsiHarError):
    pass


class RangeError(CsiHarError, ValueError):
    pass


class InsufficientDataError(CsiHarError):
    pass


# ---------- models ----------
class ContractError(CsiHarError, ValueError):
    pass


class NumericError(CsiHarError, ArithmeticError):
    pass


class ConfigurationError(CsiHarError):
    pass


class DimensionError(CsiHarError, ValueError):
    pass


class CheckpointError(CsiHarError):
    pass


class TrainingDivergedError(NumericError):
    def __init__(self, message: str, loss_trace: Sequence[float] = ()):
        super().__init__(message)
        self.loss_trace = list(loss_trace)

    def __str__(self) -> str:
        tail = ", ".join(f"{v:.4g}" for v in self.loss_trace[-5:])
        return f"{self.args[0]} (last losses: [{tail}])" if self.loss_trace else str(self.args[0])
