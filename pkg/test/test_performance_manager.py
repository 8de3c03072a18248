"""
Performance manager tests: reference cache, timing and the worker pool
"""

import numpy as np
import pytest

from app.services.performance_manager import PerformanceManager, ReferenceCache, array_digest, run_parallel


class TestReferenceCache:
    """LRU cache statistics"""

    def test_hits_and_misses(self):
        cache = ReferenceCache(maxsize=2)
        assert cache.get("a") is None
        cache.set("a", 1)
        assert cache.get("a") == 1
        assert cache.get_stats() == {"size": 1, "max_size": 2, "hits": 1, "misses": 1}

    def test_eviction(self):
        cache = ReferenceCache(maxsize=2)
        cache.set("a", 1)
        cache.set("b", 2)
        cache.get("a")
        cache.set("c", 3)
        assert cache.get("b") is None
        assert cache.get("a") == 1


class TestPerformanceManager:
    """Cached and timed operations"""

    def test_cached_operation_runs_once(self, mocker):
        manager = PerformanceManager()
        operation = mocker.Mock(return_value=np.arange(3))

        first = manager.cached_operation(("ref", 1), operation, name="reference")
        second = manager.cached_operation(("ref", 1), operation, name="reference")

        assert operation.call_count == 1
        assert second is first
        metrics = manager.metrics["reference"]
        assert (metrics.cache_hits, metrics.cache_misses, metrics.total_calls) == (1, 1, 1)
        assert metrics.cache_hit_rate == 0.5

    def test_timed_records_failures(self):
        manager = PerformanceManager()
        with manager.timed("cells"):
            pass
        with pytest.raises(ValueError):
            with manager.timed("cells"):
                raise ValueError("bad")

        metrics = manager.metrics["cells"]
        assert metrics.total_calls == 2
        assert metrics.error_count == 1
        assert metrics.min_duration_ms <= metrics.max_duration_ms

        report = manager.get_performance_report()
        assert report["operations"][0]["name"] == "cells"
        assert report["operations"][0]["errors"] == 1


class TestArrayDigest:
    """Content hashes for cache keys"""

    def test_depends_on_content_and_dtype(self):
        a = np.arange(4, dtype=np.float64)
        assert array_digest(a) == array_digest(a.copy())
        assert array_digest(a) != array_digest(a.astype(np.complex128))
        assert array_digest(a) != array_digest(a[::-1])


class TestRunParallel:
    """Deterministic fan-out"""

    @pytest.mark.parametrize("jobs", [1, 2, 8])
    def test_results_in_task_order(self, jobs):
        tasks = [-5, 3, -1, 0, 7]
        assert run_parallel(abs, tasks, jobs) == [5, 3, 1, 0, 7]

    def test_empty(self):
        assert run_parallel(abs, [], jobs=4) == []
