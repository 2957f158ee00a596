"""
Bounded worker pool and the training/benchmark activity gate.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Iterator, List, Sequence, TypeVar

from .errors import BenchConflict

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """
    Runs jobs on at most `jobs` workers; results come back in submission order.
    jobs == 1 runs inline on the calling thread.
    """

    def __init__(self, jobs: int = 1) -> None:
        self.jobs = max(1, int(jobs))

    def map(self, func: Callable[[T], R], items: Sequence[T]) -> List[R]:
        if self.jobs == 1 or len(items) <= 1:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.jobs, thread_name_prefix="fens-worker") as executor:
            return list(executor.map(func, items))


class ActivityGate:
    """
    Any number of training activities may hold the gate at once; the benchmark
    harness needs it exclusively and refuses to start while training runs.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._training = 0
        self._benchmarking = False

    @contextmanager
    def training(self) -> Iterator[None]:
        with self._lock:
            if self._benchmarking:
                raise BenchConflict("training cannot start while a benchmark is running")
            self._training += 1
        try:
            yield
        finally:
            with self._lock:
                self._training -= 1

    @contextmanager
    def benchmark(self) -> Iterator[None]:
        with self._lock:
            if self._training:
                raise BenchConflict(
                    "benchmark refused: training is active in this process",
                    details={"active_training": self._training},
                )
            if self._benchmarking:
                raise BenchConflict("another benchmark is already running")
            self._benchmarking = True
        try:
            yield
        finally:
            with self._lock:
                self._benchmarking = False

    @property
    def active_training(self) -> int:
        with self._lock:
            return self._training


activity_gate = ActivityGate()
