import time

import pytest
from lsst.ts.nlkg.errors import ConvergenceError
from lsst.ts.nlkg.harness.workers import gather_jobs, run_jobs


def failing_job() -> int:
    raise ConvergenceError("no root")


@pytest.mark.asyncio
async def test_run_jobs_keeps_order_and_failures() -> None:
    def job(value: int) -> int:
        time.sleep(0.01 * (5 - value))
        return value * value

    jobs = [lambda v=v: job(v) for v in range(5)]
    jobs.insert(2, failing_job)
    results = await run_jobs(jobs, limit=3)
    assert len(results) == 6
    assert isinstance(results[2], ConvergenceError)
    assert [r for r in results if not isinstance(r, BaseException)] == [
        0,
        1,
        4,
        9,
        16,
    ]


def test_gather_jobs() -> None:
    results = gather_jobs([lambda: "a", failing_job, lambda: "c"], limit=1)
    assert results[0] == "a"
    assert isinstance(results[1], ConvergenceError)
    assert results[2] == "c"
    assert gather_jobs([]) == []
