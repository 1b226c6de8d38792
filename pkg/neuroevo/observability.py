"""
Observability for Neuroevolution Runs v1.0

Provides run-level observability:
- Event logging (in-memory buffer, JSONL file, optional console echo)
- Metrics collection (evaluation counts, failed trainings, wall times)
- Timed operations that record duration histograms

Usage:
    from neuroevo.observability import get_observability, LogLevel
    obs = get_observability()
    obs.logger.log(LogLevel.INFO, "Generation 3", context={"best": 0.91})
"""

from typing import Dict, List, Any, Optional, Iterator
from dataclasses import dataclass, field
from contextlib import contextmanager
from enum import Enum
from collections import defaultdict
from datetime import datetime
from pathlib import Path
import json
import sys
import threading
import time


class LogLevel(Enum):
    """Log levels"""
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"


_LEVEL_ORDER = {level: i for i, level in enumerate(LogLevel)}


@dataclass
class LogEntry:
    """A log entry"""
    timestamp: str
    level: LogLevel
    message: str
    context: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "timestamp": self.timestamp,
            "level": self.level.value,
            "message": self.message,
            "context": self.context,
        }


class MetricsCollector:
    """
    Collects and aggregates run metrics.

    Metrics tracked:
    - Counters (evaluations, failed trainings, skipped cells)
    - Histograms (fitness values, evaluation wall times)
    """

    def __init__(self):
        self._counters: Dict[str, float] = defaultdict(float)
        self._histograms: Dict[str, List[float]] = defaultdict(list)
        self._lock = threading.Lock()

    def increment(self, name: str, value: float = 1.0) -> None:
        """
        Increment a counter metric.

        Args:
            name: Metric name
            value: Value to add (default 1.0)
        """
        with self._lock:
            self._counters[name] += value

    def record_histogram(self, name: str, value: float) -> None:
        """Record a value in a histogram."""
        with self._lock:
            self._histograms[name].append(value)

    def get_metric(self, name: str) -> Dict[str, Any]:
        """
        Get current value of a metric.

        Returns:
            Counter value or histogram summary; an error entry if unknown
        """
        with self._lock:
            if name in self._counters:
                return {"type": "counter", "value": self._counters[name]}
            values = self._histograms.get(name)
            if values:
                return {
                    "type": "histogram",
                    "count": len(values),
                    "min": min(values),
                    "max": max(values),
                    "mean": sum(values) / len(values),
                    "sum": sum(values),
                }
        return {"error": f"Metric not found: {name}"}

    def get_all_metrics(self) -> Dict[str, Any]:
        """Get all current metric values"""
        with self._lock:
            names = list(self._counters) + list(self._histograms)
        return {name: self.get_metric(name) for name in names}

    def snapshot(self) -> Dict[str, Dict[str, Any]]:
        """Raw counters and histogram samples, picklable for another process."""
        with self._lock:
            return {
                "counters": dict(self._counters),
                "histograms": {name: list(values) for name, values in self._histograms.items()},
            }

    def merge(self, snapshot: Dict[str, Dict[str, Any]]) -> None:
        """Add counters and append histogram samples from a snapshot()."""
        with self._lock:
            for name, value in snapshot.get("counters", {}).items():
                self._counters[name] += value
            for name, values in snapshot.get("histograms", {}).items():
                self._histograms[name].extend(values)

    def reset(self) -> None:
        """Reset all metrics"""
        with self._lock:
            self._counters.clear()
            self._histograms.clear()


class EventLogger:
    """
    Event logging system.

    Logs:
    - Per-generation progress lines
    - Training failures and skipped cells
    - Dataset ingestion warnings
    """

    def __init__(
        self,
        log_dir: Optional[str] = None,
        echo: bool = False,
        echo_level: LogLevel = LogLevel.INFO
    ):
        """
        Initialize event logger.

        Args:
            log_dir: Directory for events.jsonl; None keeps events in memory only
            echo: Also print entries at or above echo_level to stderr
            echo_level: Minimum level echoed to the console
        """
        self.log_dir = Path(log_dir) if log_dir else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
        self.echo = echo
        self.echo_level = echo_level

        self._logs: List[LogEntry] = []
        self._lock = threading.Lock()

    @property
    def log_file(self) -> Optional[Path]:
        return self.log_dir / "events.jsonl" if self.log_dir is not None else None

    def log(
        self,
        level: LogLevel,
        message: str,
        context: Optional[Dict[str, Any]] = None
    ) -> None:
        """
        Log an event.

        Args:
            level: Log level
            message: Log message
            context: Optional context data (must be JSON-serializable)
        """
        entry = LogEntry(
            timestamp=datetime.now().isoformat(),
            level=level,
            message=message,
            context=context or {},
        )

        with self._lock:
            self._logs.append(entry)
            if self.log_file is not None and _LEVEL_ORDER[level] >= _LEVEL_ORDER[LogLevel.INFO]:
                with open(self.log_file, "a", encoding="utf-8") as f:
                    f.write(json.dumps(entry.to_dict(), default=str) + "\n")

        if self.echo and _LEVEL_ORDER[level] >= _LEVEL_ORDER[self.echo_level]:
            print(f"[{level.value.upper()}] {message}", file=sys.stderr)

    def get_logs(self, level: Optional[LogLevel] = None, limit: int = 100) -> List[Dict[str, Any]]:
        """
        Get log entries, most recent first.

        Args:
            level: Filter by log level
            limit: Maximum number of entries
        """
        with self._lock:
            filtered = [l for l in self._logs if level is None or l.level == level]
            return [l.to_dict() for l in reversed(filtered[-limit:])]


class ObservabilityStack:
    """
    Complete observability stack.

    Integrates metrics and logging.
    """

    def __init__(self, log_dir: Optional[str] = None, echo: bool = False):
        self.metrics = MetricsCollector()
        self.logger = EventLogger(log_dir, echo=echo)

    @contextmanager
    def timed(self, operation: str) -> Iterator[None]:
        """Record the wall time of a block under `<operation>.duration`."""
        start = time.perf_counter()
        try:
            yield
        except Exception as e:
            self.metrics.increment(f"{operation}.errors")
            self.logger.log(
                LogLevel.ERROR,
                f"Error in {operation}: {e}",
                context={"operation": operation, "error_type": type(e).__name__},
            )
            raise
        finally:
            self.metrics.record_histogram(f"{operation}.duration", time.perf_counter() - start)

    def export_metrics(self, filepath: str) -> None:
        """Export metrics to JSON file"""
        data = {
            "timestamp": datetime.now().isoformat(),
            "metrics": self.metrics.get_all_metrics(),
        }
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)


# Singleton instance
_observability: Optional[ObservabilityStack] = None
_singleton_lock = threading.Lock()


def get_observability() -> ObservabilityStack:
    """Get the global observability stack instance"""
    global _observability
    with _singleton_lock:
        if _observability is None:
            _observability = ObservabilityStack()
        return _observability


def configure_observability(log_dir: Optional[str] = None, echo: bool = False) -> ObservabilityStack:
    """Replace the global stack, e.g. to point events.jsonl at a results directory."""
    global _observability
    with _singleton_lock:
        _observability = ObservabilityStack(log_dir, echo=echo)
        return _observability
