"""Independent run tasks executed through an asyncio loop over a process pool."""

import asyncio
import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Callable, Dict, Hashable, Optional, Sequence, TypeVar

from alpha_bandit.config import JOBS_VAR, positive_int_from_env

logger = logging.getLogger("alpha-bandit.run_pool")

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_JOBS = 1


def default_jobs() -> int:
    return positive_int_from_env(JOBS_VAR, DEFAULT_JOBS)


class RunPool:
    """Runs ``fn(task)`` for every task and returns results keyed by ``key(task)``.

    With ``jobs == 1`` tasks run serially in-process; otherwise at most
    ``jobs`` tasks are in flight on a ``ProcessPoolExecutor``. ``fn`` must be
    a module-level function so it can be pickled.
    """

    def __init__(
        self,
        jobs: Optional[int] = None,
        executor_factory: Callable[[int], Executor] = ProcessPoolExecutor,
    ):
        if jobs is None:
            jobs = default_jobs()
        if isinstance(jobs, bool) or not isinstance(jobs, int) or jobs < 1:
            raise ValueError(f"jobs must be a positive integer, got {jobs!r}")
        self.jobs = jobs
        self._executor_factory = executor_factory

    @staticmethod
    def _check_keys(tasks: Sequence[T], key: Callable[[T], Hashable]) -> None:
        seen = set()
        for task in tasks:
            k = key(task)
            if k in seen:
                raise ValueError(f"Duplicate task key: {k!r}")
            seen.add(k)

    async def run(
        self,
        tasks: Sequence[T],
        fn: Callable[[T], R],
        key: Callable[[T], Hashable],
    ) -> Dict[Hashable, R]:
        self._check_keys(tasks, key)
        if not tasks:
            return {}
        logger.debug("Starting run pool", extra={"tasks": len(tasks), "jobs": self.jobs})

        if self.jobs == 1:
            results: Dict[Hashable, R] = {}
            for task in tasks:
                results[key(task)] = fn(task)
                await asyncio.sleep(0)
            return results

        loop = asyncio.get_running_loop()
        semaphore = asyncio.Semaphore(self.jobs)
        executor = self._executor_factory(self.jobs)

        async def submit(task: T):
            async with semaphore:
                return key(task), await loop.run_in_executor(executor, fn, task)

        try:
            pairs = await asyncio.gather(*(submit(task) for task in tasks))
        except BaseException:
            logger.error("Run pool task failed; cancelling pending tasks")
            executor.shutdown(wait=True, cancel_futures=True)
            raise
        executor.shutdown(wait=True)
        return dict(pairs)

    def run_sync(
        self,
        tasks: Sequence[T],
        fn: Callable[[T], R],
        key: Callable[[T], Hashable],
    ) -> Dict[Hashable, R]:
        return asyncio.run(self.run(tasks, fn, key))
