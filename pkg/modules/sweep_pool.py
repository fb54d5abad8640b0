from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import logging
import threading
import time
from typing import Any, Callable, Optional

from .errors import SimulationError

logger = logging.getLogger(__name__)


@dataclass
class SweepTask:
    """One sweep cell or replicate; ``result`` is whatever the task function returned."""

    index: int
    label: str
    fn: Callable[..., Any] = field(repr=False)
    args: tuple = field(default=(), repr=False)
    status: str = "pending"  # pending, running, completed, failed
    result: Any = None
    error: Optional[SimulationError] = None
    started_at: Optional[float] = None
    completed_at: Optional[float] = None

    @property
    def elapsed(self) -> float:
        if self.started_at is None or self.completed_at is None:
            return 0.0
        return self.completed_at - self.started_at


class SweepPool:
    """Bounded pool for independent cells.

    Each task owns its engine or solver instance and writes only its own output
    directory. Results come back in submission order, whatever order the
    workers finish in. With one worker the tasks run in-process.
    """

    def __init__(self, max_workers: int = 1):
        if max_workers < 1:
            raise ValueError("max_workers must be at least 1")
        self.max_workers = max_workers
        self.tasks: list[SweepTask] = []
        self._lock = threading.RLock()

    def submit(self, label: str, fn: Callable[..., Any], *args) -> SweepTask:
        with self._lock:
            task = SweepTask(index=len(self.tasks), label=label, fn=fn, args=args)
            self.tasks.append(task)
        logger.debug("Sweep task submitted: index=%d label=%s", task.index, label)
        return task

    def _mark_completed(self, task: SweepTask, result: Any) -> None:
        with self._lock:
            task.status = "completed"
            task.result = result
            task.completed_at = time.perf_counter()
        logger.info("Sweep task completed: label=%s elapsed=%.2fs", task.label, task.elapsed)

    def _mark_failed(self, task: SweepTask, error: SimulationError) -> None:
        with self._lock:
            task.status = "failed"
            task.error = error
            task.completed_at = time.perf_counter()
        logger.warning("Sweep task failed: label=%s code=%s error=%s", task.label, error.code, error.message)

    def run(self) -> list[SweepTask]:
        pending = [t for t in self.tasks if t.status == "pending"]
        logger.info("Sweep pool running %d task(s) on %d worker(s)", len(pending), self.max_workers)
        if self.max_workers == 1 or len(pending) <= 1:
            for task in pending:
                task.status = "running"
                task.started_at = time.perf_counter()
                try:
                    self._mark_completed(task, task.fn(*task.args))
                except SimulationError as exc:
                    self._mark_failed(task, exc)
            return list(self.tasks)

        with ProcessPoolExecutor(max_workers=min(self.max_workers, len(pending))) as executor:
            futures = []
            for task in pending:
                task.status = "running"
                task.started_at = time.perf_counter()
                futures.append((task, executor.submit(task.fn, *task.args)))
            for task, future in futures:
                try:
                    self._mark_completed(task, future.result())
                except SimulationError as exc:
                    self._mark_failed(task, exc)
        return list(self.tasks)

    def first_error(self) -> Optional[SimulationError]:
        for task in self.tasks:
            if task.error is not None:
                return task.error
        return None

    def get_stats(self) -> dict:
        with self._lock:
            counts = {"pending": 0, "running": 0, "completed": 0, "failed": 0}
            for task in self.tasks:
                counts[task.status] += 1
            return {"max_workers": self.max_workers, **counts}
