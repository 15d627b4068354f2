import asyncio
from typing import Callable, Sequence, TypeVar

from lsst.ts.nlkg.config import config, nlkg_logger

__all__ = ["run_jobs", "gather_jobs"]

logger = nlkg_logger()

T = TypeVar("T")


async def run_jobs(
    jobs: Sequence[Callable[[], T]], limit: int | None = None
) -> list[T | BaseException]:
    """Run blocking jobs in worker threads, at most ``limit`` at a time
    (``config.threads`` by default).

    Results keep the order of ``jobs``; a failed job leaves its exception
    in its slot so the other runs still complete.
    """
    semaphore = asyncio.Semaphore(max(1, limit or config.threads))

    async def run(index: int, job: Callable[[], T]) -> T:
        async with semaphore:
            logger.debug("Job started", job=index)
            return await asyncio.to_thread(job)

    return await asyncio.gather(
        *(run(index, job) for index, job in enumerate(jobs)), return_exceptions=True
    )


def gather_jobs(
    jobs: Sequence[Callable[[], T]], limit: int | None = None
) -> list[T | BaseException]:
    return asyncio.run(run_jobs(jobs, limit))
