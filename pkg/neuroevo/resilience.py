"""
Guarded Execution v1.0

Failure isolation for the experiment grid:
- run_guarded() executes a callable and records the outcome instead of raising
- FailureLedger collects failed attempts so the CLI can report them and
  exit non-zero after the remaining cells have finished
"""

from typing import Dict, List, Any, Callable, Generic, Optional, TypeVar
from dataclasses import dataclass
import threading
import time

from neuroevo.observability import LogLevel, get_observability

T = TypeVar("T")


@dataclass
class AttemptResult(Generic[T]):
    """Result of an execution attempt"""
    success: bool
    operation_id: str
    value: Optional[T] = None
    error: Optional[BaseException] = None
    elapsed_time: float = 0.0

    def describe(self) -> Dict[str, Any]:
        return {
            "operation_id": self.operation_id,
            "success": self.success,
            "elapsed_time": self.elapsed_time,
            "error": f"{type(self.error).__name__}: {self.error}" if self.error else None,
        }


def run_guarded(
    fn: Callable[..., T],
    *args: Any,
    operation_id: str,
    **kwargs: Any
) -> AttemptResult[T]:
    """
    Execute fn and capture any Exception as a failed AttemptResult.

    Args:
        fn: Function to execute
        *args: Function arguments
        operation_id: Identifier used in logs and the failure ledger
        **kwargs: Function keyword arguments

    Returns:
        AttemptResult with the value or the captured error
    """
    start = time.perf_counter()
    try:
        value = fn(*args, **kwargs)
    except Exception as e:
        elapsed = time.perf_counter() - start
        obs = get_observability()
        obs.metrics.increment("guarded.failures")
        obs.logger.log(
            LogLevel.ERROR,
            f"{operation_id} failed: {type(e).__name__}: {e}",
            context={"operation_id": operation_id, "elapsed_time": elapsed},
        )
        return AttemptResult(success=False, operation_id=operation_id, error=e, elapsed_time=elapsed)
    return AttemptResult(
        success=True,
        operation_id=operation_id,
        value=value,
        elapsed_time=time.perf_counter() - start,
    )


class FailureLedger:
    """Thread-safe record of failed attempts."""

    def __init__(self):
        self._failures: List[AttemptResult] = []
        self._lock = threading.Lock()

    def record(self, attempt: AttemptResult) -> AttemptResult:
        """Keep the attempt if it failed; return it unchanged."""
        if not attempt.success:
            with self._lock:
                self._failures.append(attempt)
        return attempt

    @property
    def failures(self) -> List[AttemptResult]:
        with self._lock:
            return list(self._failures)

    def __bool__(self) -> bool:
        with self._lock:
            return bool(self._failures)

    def __len__(self) -> int:
        with self._lock:
            return len(self._failures)
