"""
Performance Manager - reference-solution caching, timing metrics and the worker pool
Deterministic fan-out of independent numerical tasks over processes
"""

import hashlib
import threading
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Dict, Hashable, Iterable, List, Optional, TypeVar

import numpy as np
import structlog
from cachetools import LRUCache

from app.config import settings

logger = structlog.get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class PerformanceMetrics:
    """Performance metrics tracking"""
    operation_name: str = ""
    total_calls: int = 0
    total_duration_ms: float = 0.0
    min_duration_ms: float = float("inf")
    max_duration_ms: float = 0.0
    cache_hits: int = 0
    cache_misses: int = 0
    error_count: int = 0

    @property
    def average_duration_ms(self) -> float:
        return self.total_duration_ms / self.total_calls if self.total_calls > 0 else 0.0

    @property
    def cache_hit_rate(self) -> float:
        total_cache_requests = self.cache_hits + self.cache_misses
        return self.cache_hits / total_cache_requests if total_cache_requests > 0 else 0.0

    def record(self, duration_ms: float, failed: bool = False):
        self.total_calls += 1
        self.total_duration_ms += duration_ms
        self.min_duration_ms = min(self.min_duration_ms, duration_ms)
        self.max_duration_ms = max(self.max_duration_ms, duration_ms)
        if failed:
            self.error_count += 1


def array_digest(*arrays: np.ndarray) -> str:
    """Content hash of numpy arrays, used as a cache key"""
    digest = hashlib.sha256()
    for array in arrays:
        contiguous = np.ascontiguousarray(array)
        digest.update(str(contiguous.dtype).encode())
        digest.update(str(contiguous.shape).encode())
        digest.update(contiguous.tobytes())
    return digest.hexdigest()


class ReferenceCache:
    """Thread-safe LRU cache for expensive reference solutions"""

    def __init__(self, maxsize: int = None):
        self._cache: LRUCache = LRUCache(maxsize=maxsize or settings.REFERENCE_CACHE_SIZE)
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key: Hashable) -> Optional[Any]:
        with self._lock:
            value = self._cache.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def set(self, key: Hashable, value: Any):
        with self._lock:
            self._cache[key] = value

    def clear(self):
        with self._lock:
            self._cache.clear()
            self.hits = 0
            self.misses = 0

    def get_stats(self) -> Dict[str, Any]:
        with self._lock:
            return {
                "size": len(self._cache),
                "max_size": self._cache.maxsize,
                "hits": self.hits,
                "misses": self.misses,
            }


class PerformanceManager:
    """Caching and timing of named operations"""

    def __init__(self):
        self.cache = ReferenceCache()
        self.metrics: Dict[str, PerformanceMetrics] = defaultdict(PerformanceMetrics)

    def cached_operation(self, key: Hashable, operation: Callable[[], T], name: str = None) -> T:
        """Execute operation with caching"""

        name = name or getattr(operation, "__name__", "operation")
        metrics = self.metrics[name]
        metrics.operation_name = name

        cached_result = self.cache.get(key)
        if cached_result is not None:
            metrics.cache_hits += 1
            logger.debug("Cache hit", operation=name)
            return cached_result

        metrics.cache_misses += 1
        with self.timed(name):
            result = operation()
        self.cache.set(key, result)
        return result

    @contextmanager
    def timed(self, name: str):
        """Record wall time of the enclosed block"""
        metrics = self.metrics[name]
        metrics.operation_name = name
        start_time = time.perf_counter()
        failed = False
        try:
            yield metrics
        except Exception:
            failed = True
            raise
        finally:
            metrics.record((time.perf_counter() - start_time) * 1000, failed)

    def get_performance_report(self) -> Dict[str, Any]:
        """Get performance report"""

        slow_operations = sorted(self.metrics.values(), key=lambda m: m.total_duration_ms, reverse=True)

        return {
            "cache": self.cache.get_stats(),
            "operations": [
                {
                    "name": metrics.operation_name,
                    "calls": metrics.total_calls,
                    "total_ms": round(metrics.total_duration_ms, 3),
                    "avg_ms": round(metrics.average_duration_ms, 3),
                    "cache_hit_rate": metrics.cache_hit_rate,
                    "errors": metrics.error_count,
                }
                for metrics in slow_operations
            ],
        }


def run_parallel(fn: Callable[[T], R], tasks: Iterable[T], jobs: int = 1) -> List[R]:
    """Map fn over tasks; results come back in task order whatever the worker count

    fn and tasks must be picklable when jobs > 1.
    """

    tasks = list(tasks)
    jobs = max(1, min(int(jobs), len(tasks) or 1))

    if jobs == 1:
        return [fn(task) for task in tasks]

    logger.debug("Dispatching tasks", tasks=len(tasks), jobs=jobs, fn=getattr(fn, "__name__", "task"))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


# Global performance manager instance
performance_manager = PerformanceManager()
