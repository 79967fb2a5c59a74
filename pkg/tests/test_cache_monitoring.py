"""
Tests for the steady-state cache and the solver metrics collector.
"""

import unittest
from unittest import mock

from srmaser.cache import SteadyStateCache, cached, clear_cache, make_key
from srmaser.model import make_params
from srmaser.monitoring import SolverMetrics, get_metrics, timed


class TestMakeKey(unittest.TestCase):
    """Canonical cache keys."""

    def test_models_hash_by_value(self):
        """Equal parameter models give equal keys."""
        a = make_params(omega_c=1.0, kappa_c=1.0, n_spins=10, omega_s=1.0, g=0.1)
        b = make_params(omega_c=1.0, kappa_c=1.0, n_spins=10, omega_s=1.0, g=0.1)
        c = a.with_updates(g=0.2)
        self.assertEqual(make_key(a, tol=1e-9), make_key(b, tol=1e-9))
        self.assertNotEqual(make_key(a), make_key(c))
        self.assertNotEqual(make_key(a, tol=1e-9), make_key(a, tol=1e-8))

    def test_complex_values(self):
        """Complex numbers are encoded without error."""
        self.assertEqual(len(make_key(1 + 2j)), 32)


class TestSteadyStateCache(unittest.TestCase):
    """LRU cache with TTL."""

    def test_set_get(self):
        """Stored values come back."""
        cache = SteadyStateCache(max_entries=4)
        cache.set("a", 1)
        self.assertEqual(cache.get("a"), 1)
        self.assertIsNone(cache.get("b"))

    def test_expiry(self):
        """Entries past their TTL are dropped."""
        cache = SteadyStateCache()
        with mock.patch("srmaser.cache.time.time", return_value=1000.0):
            cache.set("a", 1, ttl=5)
        with mock.patch("srmaser.cache.time.time", return_value=1006.0):
            self.assertIsNone(cache.get("a"))
        self.assertEqual(len(cache), 0)

    def test_eviction_order(self):
        """The least recently used entry is evicted first."""
        cache = SteadyStateCache(max_entries=2)
        cache.set("a", 1)
        cache.set("b", 2)
        cache.get("a")
        cache.set("c", 3)
        self.assertIsNone(cache.get("b"))
        self.assertEqual(cache.get("a"), 1)
        self.assertEqual(cache.get_stats()["evictions"], 1)

    def test_cached_decorator(self):
        """The decorator calls through once per distinct argument set."""
        clear_cache()
        calls = []

        @cached(key_prefix="test")
        def square(x):
            calls.append(x)
            return x * x

        before = get_metrics().get_stats()["cache"]
        self.assertEqual(square(3), 9)
        self.assertEqual(square(3), 9)
        self.assertEqual(square(4), 16)
        after = get_metrics().get_stats()["cache"]
        self.assertEqual(calls, [3, 4])
        self.assertEqual(after["hits"] - before["hits"], 1)
        self.assertEqual(after["misses"] - before["misses"], 2)
        clear_cache()


class TestSolverMetrics(unittest.TestCase):
    """Metrics aggregation."""

    def test_newton_stats(self):
        """Newton records aggregate counts, iterations and residuals."""
        metrics = SolverMetrics()
        metrics.record_newton(4, 0.1, 1e-12)
        metrics.record_newton(6, 0.2, 1e-10)
        stats = metrics.get_stats()["newton"]
        self.assertEqual(stats["solves"], 2)
        self.assertEqual(stats["avg_iterations"], 5.0)
        self.assertEqual(stats["worst_residual"], 1e-10)

    def test_failures(self):
        """Failures are counted per kind and kept in the recent list."""
        metrics = SolverMetrics()
        metrics.record_failure("sweep_point", "no root")
        metrics.record_fallback("relaxation")
        stats = metrics.get_stats()
        self.assertEqual(stats["failures"]["by_kind"], {"sweep_point": 1})
        self.assertEqual(stats["failures"]["recent"][0]["message"], "no root")
        self.assertEqual(stats["fallbacks"], {"relaxation": 1})

    def test_merge(self):
        """Snapshots from worker processes add into the parent collector."""
        worker = SolverMetrics()
        worker.record_newton(3, 0.05, 1e-11)
        worker.record_scan(500, 2)
        worker.record_cache_miss()
        parent = SolverMetrics()
        parent.record_newton(2, 0.01, 1e-12)
        parent.merge(worker.get_stats())
        stats = parent.get_stats()
        self.assertEqual(stats["newton"]["solves"], 2)
        self.assertEqual(stats["newton"]["iterations"], 5)
        self.assertEqual(stats["spectrum"]["samples"], 500)
        self.assertEqual(stats["cache"]["misses"], 1)

    def test_reset(self):
        """reset clears every counter."""
        metrics = SolverMetrics()
        metrics.record_integration(120, 0.3)
        metrics.reset()
        self.assertEqual(metrics.get_stats()["integration"]["runs"], 0)

    def test_timed(self):
        """timed records a non-negative elapsed time."""
        with timed() as clock:
            sum(range(100))
        self.assertGreaterEqual(clock.elapsed, 0.0)


if __name__ == '__main__':
    unittest.main()
