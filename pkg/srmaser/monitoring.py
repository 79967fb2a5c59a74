"""
Solver metrics collection for srmaser.
"""

import threading
import time
from collections import defaultdict, deque
from datetime import datetime, timedelta, timezone
from typing import Dict, Optional


class SolverMetrics:
    """Collects and aggregates solver and scan metrics."""

    def __init__(self):
        self._lock = threading.RLock()
        self.reset()

    def reset(self):
        """Reset all metrics."""
        with self._lock:
            self._newton_solves = 0
            self._newton_iterations = 0
            self._newton_time = 0.0
            self._residuals = deque(maxlen=1000)
            self._fallbacks = defaultdict(int)
            self._failures = defaultdict(int)
            self._integrations = 0
            self._rhs_evaluations = 0
            self._integration_time = 0.0
            self._scans = 0
            self._scan_samples = 0
            self._scan_passes = 0
            self._cache_hits = 0
            self._cache_misses = 0
            self._recent_failures = deque(maxlen=100)
            self._start_time = time.time()

    def record_newton(self, iterations: int, elapsed: float, residual: float):
        with self._lock:
            self._newton_solves += 1
            self._newton_iterations += iterations
            self._newton_time += elapsed
            self._residuals.append(residual)

    def record_fallback(self, kind: str):
        with self._lock:
            self._fallbacks[kind] += 1

    def record_failure(self, kind: str, message: str):
        with self._lock:
            self._failures[kind] += 1
            self._recent_failures.append({
                'timestamp': datetime.now(timezone.utc).isoformat(),
                'kind': kind,
                'message': message,
            })

    def record_integration(self, nfev: int, elapsed: float):
        with self._lock:
            self._integrations += 1
            self._rhs_evaluations += nfev
            self._integration_time += elapsed

    def record_scan(self, samples: int, passes: int):
        with self._lock:
            self._scans += 1
            self._scan_samples += samples
            self._scan_passes += passes

    def record_cache_hit(self):
        with self._lock:
            self._cache_hits += 1

    def record_cache_miss(self):
        with self._lock:
            self._cache_misses += 1

    def merge(self, stats: Dict):
        """Fold a snapshot from another process (as returned by get_stats) into this collector."""
        with self._lock:
            newton = stats.get('newton', {})
            self._newton_solves += newton.get('solves', 0)
            self._newton_iterations += newton.get('iterations', 0)
            self._newton_time += newton.get('time_s', 0.0)
            for kind, count in stats.get('fallbacks', {}).items():
                self._fallbacks[kind] += count
            failures = stats.get('failures', {})
            for kind, count in failures.get('by_kind', {}).items():
                self._failures[kind] += count
            self._recent_failures.extend(failures.get('recent', []))
            integration = stats.get('integration', {})
            self._integrations += integration.get('runs', 0)
            self._rhs_evaluations += integration.get('rhs_evaluations', 0)
            self._integration_time += integration.get('time_s', 0.0)
            spectrum = stats.get('spectrum', {})
            self._scans += spectrum.get('scans', 0)
            self._scan_samples += spectrum.get('samples', 0)
            self._scan_passes += spectrum.get('passes', 0)
            cache = stats.get('cache', {})
            self._cache_hits += cache.get('hits', 0)
            self._cache_misses += cache.get('misses', 0)

    def get_stats(self) -> Dict:
        """Get a JSON-serializable snapshot."""
        with self._lock:
            uptime_seconds = time.time() - self._start_time
            residuals = sorted(self._residuals)
            worst = residuals[-1] if residuals else 0.0
            median = residuals[len(residuals) // 2] if residuals else 0.0
            lookups = self._cache_hits + self._cache_misses
            return {
                'uptime': {
                    'seconds': uptime_seconds,
                    'formatted': str(timedelta(seconds=int(uptime_seconds))),
                },
                'newton': {
                    'solves': self._newton_solves,
                    'iterations': self._newton_iterations,
                    'avg_iterations': round(self._newton_iterations / max(self._newton_solves, 1), 2),
                    'time_s': self._newton_time,
                    'median_residual': median,
                    'worst_residual': worst,
                },
                'fallbacks': dict(self._fallbacks),
                'failures': {
                    'total': sum(self._failures.values()),
                    'by_kind': dict(self._failures),
                    'recent': list(self._recent_failures)[-10:],
                },
                'integration': {
                    'runs': self._integrations,
                    'rhs_evaluations': self._rhs_evaluations,
                    'time_s': self._integration_time,
                },
                'spectrum': {
                    'scans': self._scans,
                    'samples': self._scan_samples,
                    'passes': self._scan_passes,
                },
                'cache': {
                    'hits': self._cache_hits,
                    'misses': self._cache_misses,
                    'hit_rate_percent': round(100.0 * self._cache_hits / max(lookups, 1), 2),
                },
                'timestamp': datetime.now(timezone.utc).isoformat(),
            }


# Global metrics collector instance
_metrics = SolverMetrics()


def get_metrics() -> SolverMetrics:
    """Get the global metrics collector instance."""
    return _metrics


class timed:
    """Context manager measuring wall time into ``elapsed``."""

    def __init__(self):
        self.elapsed: Optional[float] = None
        self._start = 0.0

    def __enter__(self) -> "timed":
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.elapsed = time.perf_counter() - self._start
