from __future__ import annotations

"""Deterministic ensemble execution across worker processes."""

import logging
from multiprocessing import Pool
from typing import Any, Callable, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Streams per task. Fixed so the task list never depends on the worker count.
STREAMS_PER_TASK = 64


def stream_chunks(n_streams: int, per_task: int = STREAMS_PER_TASK) -> list[tuple[int, int]]:
    """Half-open stream index ranges [start, stop) covering 0..n_streams-1."""
    return [(start, min(start + per_task, n_streams)) for start in range(0, n_streams, per_task)]


def run_tasks(worker: Callable[[Any], Any], tasks: Sequence[Any], workers: int = 1) -> list[Any]:
    """worker(task) for every task, results in task order.

    worker must be a module-level function so it pickles.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    processes = min(workers, len(tasks))
    logger.debug("dispatching %d tasks to %d processes", len(tasks), processes)
    with Pool(processes=processes) as pool:
        return pool.map(worker, tasks, chunksize=1)


def concat(results: Iterable[np.ndarray]) -> np.ndarray:
    """Concatenate per-task arrays already sorted by stream index."""
    results = list(results)
    if not results:
        return np.empty(0)
    return np.concatenate(results)


def sum_arrays(results: Iterable[np.ndarray]) -> np.ndarray:
    """Elementwise sum in task order (fixed order keeps float sums reproducible)."""
    total = None
    for r in results:
        total = np.array(r, dtype=np.float64) if total is None else total + r
    return total
