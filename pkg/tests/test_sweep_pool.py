from __future__ import annotations

import pytest

from modules.config import load_config
from modules.error_codes import CONFIG_FILE_NOT_FOUND
from modules.errors import ConfigError
from modules.sweep_pool import SweepPool, SweepTask


def _fail(message: str) -> None:
    raise ConfigError(message)


def test_pool_rejects_zero_workers() -> None:
    with pytest.raises(ValueError):
        SweepPool(max_workers=0)


def test_submitted_tasks_start_pending() -> None:
    pool = SweepPool(max_workers=2)
    tasks = [pool.submit(f"cell_{i}", pow, i, 2) for i in range(3)]

    assert [t.index for t in tasks] == [0, 1, 2]
    assert all(t.status == "pending" for t in tasks)
    assert pool.get_stats() == {"max_workers": 2, "pending": 3, "running": 0, "completed": 0, "failed": 0}


def test_single_worker_runs_in_process_and_records_failures() -> None:
    """Failures are kept on the task, later tasks still run."""
    pool = SweepPool(max_workers=1)
    pool.submit("a", pow, 3, 2)
    pool.submit("b", _fail, "bad cell")
    pool.submit("c", pow, 2, 5)

    tasks = pool.run()

    assert [t.status for t in tasks] == ["completed", "failed", "completed"]
    assert tasks[0].result == 9
    assert tasks[2].result == 32
    assert pool.first_error() is tasks[1].error
    assert tasks[1].error.message == "bad cell"
    assert pool.get_stats()["failed"] == 1


def test_process_pool_returns_results_in_submission_order() -> None:
    pool = SweepPool(max_workers=2)
    for i in range(4):
        pool.submit(f"cell_{i}", pow, i, 3)

    tasks = pool.run()

    assert [t.result for t in tasks] == [0, 1, 8, 27]
    assert all(t.status == "completed" for t in tasks)
    assert all(t.elapsed >= 0.0 for t in tasks)


def test_process_pool_keeps_error_codes(tmp_path) -> None:
    pool = SweepPool(max_workers=2)
    pool.submit("ok", pow, 2, 2)
    pool.submit("missing", load_config, str(tmp_path / "absent.yaml"))

    tasks = pool.run()

    assert tasks[0].result == 4
    assert tasks[1].status == "failed"
    assert isinstance(tasks[1].error, ConfigError)
    assert tasks[1].error.code == CONFIG_FILE_NOT_FOUND


def test_elapsed_is_zero_before_completion() -> None:
    task = SweepTask(index=0, label="x", fn=pow)

    assert task.elapsed == 0.0
