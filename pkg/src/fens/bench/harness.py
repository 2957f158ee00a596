"""
CPU-only latency and memory measurement for single models and ensembles.

Latency is the median over `runs` timed forwards after `warmup` untimed
ones. Load memory is the resident-set delta across the load call (or
allocator-tracked bytes when RSS is unavailable); inference memory is the
tracemalloc peak during one single-image forward.
"""

from __future__ import annotations

import gc
import logging
import statistics
import time
import tracemalloc
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import psutil

from fens.core.coerce import to_choice
from fens.core.errors import ConfigError, EnsembleError, MemoryProbeUnsupported
from fens.core.logs import log_event
from fens.core.queue import activity_gate
from fens.core.rng import stream
from fens.ensemble.voting import VOTING, check_weights, vote
from fens.tensor import functional as F
from fens.tensor.tensor import Tensor, no_grad
from fens.zoo.cost import count_flops
from fens.zoo.model import Model

from .env import environment

logger = logging.getLogger(__name__)

MEMORY_METHODS = ("auto", "rss", "tracemalloc")
MB = float(2**20)

Loader = Callable[[], Model]


@dataclass(frozen=True)
class BenchConfig:
    batch: int = 32
    runs: int = 30
    warmup: int = 5
    memory: str = "auto"
    seed: int = 0

    def validate(self) -> "BenchConfig":
        if self.runs < 3:
            raise ConfigError(f"runs must be >= 3, got {self.runs}", details={"key": "runs"})
        if self.warmup < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}", details={"key": "warmup"})
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}", details={"key": "batch"})
        to_choice(self.memory, MEMORY_METHODS, "memory")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class BenchReport:
    subject: str
    latency_batch_s: float
    inference_time_img_s: float
    load_memory_mb: float
    inference_memory_img_mb: float
    params: int
    macs: int
    batch: int = 32
    runs: int = 30
    memory_method: str = "rss"
    environment: Dict[str, Any] = field(default_factory=dict)
    members: List["BenchReport"] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["members"] = [m.to_dict() for m in self.members]
        return data


# ---------------------------
# Timing
# ---------------------------

def median_time(func: Callable[[], Any], runs: int, warmup: int = 0) -> float:
    for _ in range(warmup):
        func()
    timings = []
    for _ in range(runs):
        start = time.perf_counter()
        func()
        timings.append(time.perf_counter() - start)
    return statistics.median(timings)


def _inputs(shape: Tuple[int, int, int], batch: int, seed: int) -> np.ndarray:
    return stream(seed, "bench").standard_normal((batch, *shape)).astype(np.float32)


def _forward(model: Model) -> Callable[[np.ndarray], np.ndarray]:
    model.eval()

    def run(images: np.ndarray) -> np.ndarray:
        with no_grad():
            return model(Tensor(images)).data

    return run


def measure_latency(model: Model, config: BenchConfig) -> Tuple[float, float]:
    """
    (median batch latency, median single-image latency) in seconds.
    """
    config.validate()
    return _latency(_forward(model), tuple(model.spec.input_shape), config)


def _latency(run: Callable[[np.ndarray], Any], shape: Tuple[int, int, int], config: BenchConfig) -> Tuple[float, float]:
    batch = _inputs(shape, config.batch, config.seed)
    single = batch[:1]
    latency_batch = median_time(lambda: run(batch), config.runs, config.warmup)
    per_image = median_time(lambda: run(single), config.runs, config.warmup)
    return latency_batch, per_image


# ---------------------------
# Memory
# ---------------------------

def _rss() -> Optional[int]:
    try:
        return int(psutil.Process().memory_info().rss)
    except (psutil.Error, OSError, AttributeError):
        return None


def resolve_memory_method(requested: str) -> str:
    if requested == "tracemalloc":
        return "tracemalloc"
    if _rss() is not None:
        return "rss"
    if requested == "rss":
        raise MemoryProbeUnsupported("resident-set size is not available on this platform")
    return "tracemalloc"


def _traced(func: Callable[[], Any]) -> Tuple[Any, int, int]:
    """
    Run func under tracemalloc; returns (value, retained bytes, peak bytes).
    """
    already = tracemalloc.is_tracing()
    if not already:
        tracemalloc.start()
    try:
        tracemalloc.clear_traces()
        base, _ = tracemalloc.get_traced_memory()
        tracemalloc.reset_peak()
        value = func()
        current, peak = tracemalloc.get_traced_memory()
    finally:
        if not already:
            tracemalloc.stop()
    return value, max(0, current - base), max(0, peak - base)


def measure_load(load: Loader, method: str) -> Tuple[Model, float]:
    gc.collect()
    if method == "rss":
        before = _rss()
        model = load()
        after = _rss()
        if before is None or after is None:
            raise MemoryProbeUnsupported("resident-set size became unavailable during measurement")
        return model, max(0, after - before) / MB
    model, retained, _ = _traced(load)
    return model, retained / MB


def measure_inference_memory(run: Callable[[np.ndarray], Any], shape: Tuple[int, int, int], seed: int = 0) -> float:
    single = _inputs(shape, 1, seed)
    gc.collect()
    _, _, peak = _traced(lambda: run(single))
    return peak / MB


def measure_memory(load: Loader, config: BenchConfig) -> Tuple[Model, float, float, str]:
    """
    Loads the model once; returns (model, load MB, inference MB per image, method).
    """
    config.validate()
    method = resolve_memory_method(config.memory)
    model, load_mb = measure_load(load, method)
    inference_mb = measure_inference_memory(_forward(model), tuple(model.spec.input_shape), config.seed)
    return model, load_mb, inference_mb, method


# ---------------------------
# Subjects
# ---------------------------

def _bench_one(subject: str, load: Loader, config: BenchConfig, env: Dict[str, Any]) -> Tuple[Model, BenchReport]:
    model, load_mb, inference_mb, method = measure_memory(load, config)
    latency_batch, per_image = measure_latency(model, config)
    cost = count_flops(model.spec)
    report = BenchReport(
        subject=subject,
        latency_batch_s=latency_batch,
        inference_time_img_s=per_image,
        load_memory_mb=load_mb,
        inference_memory_img_mb=inference_mb,
        params=cost.params,
        macs=cost.macs,
        batch=config.batch,
        runs=config.runs,
        memory_method=method,
        environment=env,
    )
    log_event(logger, "bench_done", subject=subject, latency_batch_s=latency_batch,
              inference_time_img_s=per_image, method=method)
    return model, report


def bench_model(subject: str, load: Loader, config: Optional[BenchConfig] = None) -> BenchReport:
    config = (config or BenchConfig()).validate()
    with activity_gate.benchmark():
        _, report = _bench_one(subject, load, config, environment())
    return report


def ensemble_forward(
    models: Sequence[Model],
    strategy: str,
    weights: Optional[Sequence[float]] = None,
) -> Callable[[np.ndarray], np.ndarray]:
    """
    Members run one after another, then their probabilities are voted on.
    """
    runners = [_forward(m) for m in models]

    def run(images: np.ndarray) -> np.ndarray:
        probs = [F.softmax(r(images).astype(np.float64)) for r in runners]
        return vote(strategy, probs, weights)

    return run


def bench_ensemble(
    members: Sequence[Tuple[str, Loader]],
    strategy: str = "soft",
    config: Optional[BenchConfig] = None,
    *,
    weights: Optional[Sequence[float]] = None,
    subject: str = "ensemble",
) -> BenchReport:
    if not members:
        raise EnsembleError("benchmarking an ensemble needs at least one member")
    if strategy not in VOTING:
        raise EnsembleError(f"unknown voting strategy {strategy!r}", details={"known": list(VOTING)})
    if strategy == "weighted":
        if weights is None:
            raise EnsembleError("weighted voting needs weights")
        weights = check_weights(weights, len(members)).tolist()
    config = (config or BenchConfig()).validate()
    env = environment()
    with activity_gate.benchmark():
        models: List[Model] = []
        subs: List[BenchReport] = []
        for member_id, load in members:
            model, report = _bench_one(member_id, load, config, env)
            models.append(model)
            subs.append(report)
        shapes = {tuple(m.spec.input_shape) for m in models}
        if len(shapes) != 1:
            raise EnsembleError("ensemble members disagree on input shape", details={"shapes": sorted(shapes)})
        shape = shapes.pop()
        run = ensemble_forward(models, strategy, weights)
        latency_batch, per_image = _latency(run, shape, config)
        inference_mb = measure_inference_memory(run, shape, config.seed)

    report = BenchReport(
        subject=subject,
        latency_batch_s=latency_batch,
        inference_time_img_s=per_image,
        load_memory_mb=sum(s.load_memory_mb for s in subs),
        inference_memory_img_mb=inference_mb,
        params=sum(s.params for s in subs),
        macs=sum(s.macs for s in subs),
        batch=config.batch,
        runs=config.runs,
        memory_method=subs[0].memory_method,
        environment=env,
        members=subs,
    )
    log_event(logger, "bench_done", subject=subject, members=len(subs), strategy=strategy,
              latency_batch_s=latency_batch, inference_time_img_s=per_image)
    return report
