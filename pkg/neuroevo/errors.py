"""
Error taxonomy for the neuroevolution engine.

Every error raised on purpose by the package derives from NeuroevoError so
callers (the experiment grid, the CLI) can isolate failures per cell without
swallowing programming errors such as TypeError.
"""

from typing import List, Optional


class NeuroevoError(Exception):
    """Base class for all package errors."""


class ConfigError(NeuroevoError, ValueError):
    """Invalid or unreadable configuration."""


class ShapeError(NeuroevoError, ValueError):
    """Array dimensions do not match what the network or metric expects."""


class DescriptorError(NeuroevoError, ValueError):
    """A network descriptor violates its structural invariants."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("invalid descriptor: " + "; ".join(self.violations))


class TrainingError(NeuroevoError, ArithmeticError):
    """Training produced a non-finite loss, gradient or weight."""

    def __init__(self, message: str, epoch: int, batch: Optional[int] = None):
        self.epoch = epoch
        self.batch = batch
        where = f"epoch {epoch}" if batch is None else f"epoch {epoch}, batch {batch}"
        super().__init__(f"{message} ({where})")


class CoverageError(NeuroevoError, ValueError):
    """A coverage metric was called with an empty or mismatched trace/profile."""


class DataError(NeuroevoError, ValueError):
    """Dataset ingestion, splitting or masking failed."""


class FitnessError(NeuroevoError, ValueError):
    """A fitness strategy was applied outside its preconditions."""


class ReportingError(NeuroevoError, ValueError):
    """Results could not be summarized."""
