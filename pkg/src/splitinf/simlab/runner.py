"""Replication fan-out with per-replication random streams.

A replication is a picklable callable ``task(rng, rep)``.  Its stream is
derived from ``(seed, cell, rep, attempt)``, so results do not depend on the
number of workers or on scheduling.  Failed replications are redrawn with
the next attempt index and counted.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List

import numpy as np

from ..errors import FailureBudgetExceeded, SplitInfError
from ..rng import replication_rng

__all__ = ["RunResult", "run_replications", "RECOVERABLE"]

log = logging.getLogger(__name__)

#: numerical failures that trigger a redraw of the replication
RECOVERABLE = (SplitInfError, np.linalg.LinAlgError)
MAX_ATTEMPTS = 20
#: fraction of redrawn replications above which a run is declared failed
FAILURE_BUDGET = 0.05


@dataclass
class RunResult:
    results: List[Any]
    resampled: int
    n_reps: int

    @property
    def resample_rate(self) -> float:
        return self.resampled / max(1, self.n_reps)


def _one(task: Callable, seed: int, cell: str, rep: int):
    for attempt in range(MAX_ATTEMPTS):
        rng = replication_rng(seed, cell, rep, attempt)
        try:
            return task(rng, rep), attempt
        except RECOVERABLE as exc:
            log.info("replication %d of %s failed (attempt %d): %s", rep, cell, attempt, exc)
    raise FailureBudgetExceeded(f"replication {rep} of {cell} failed {MAX_ATTEMPTS} times")


def _chunk(args):
    task, seed, cell, reps = args
    return [_one(task, seed, cell, r) for r in reps]


def run_replications(task: Callable, seed: int, cell: str, reps, workers: int = 1,
                     budget: float = FAILURE_BUDGET) -> RunResult:
    """Run ``task`` for every index in ``reps``; results come back in index order."""
    reps = list(reps)
    if workers <= 1 or len(reps) < 2:
        pairs = [_one(task, seed, cell, r) for r in reps]
    else:
        n_chunks = min(len(reps), 4 * workers)
        chunks = [list(c) for c in np.array_split(reps, n_chunks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_chunk, [(task, seed, cell, [int(r) for r in c]) for c in chunks])
            pairs = [pair for part in parts for pair in part]
    resampled = sum(1 for _, attempts in pairs if attempts)
    if reps and resampled / len(reps) > budget:
        raise FailureBudgetExceeded(
            f"{resampled} of {len(reps)} replications of {cell} needed redraws")
    return RunResult([res for res, _ in pairs], resampled, len(reps))
