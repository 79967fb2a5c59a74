"""
Caching layer for steady-state solves.

Steady states are keyed by an md5 digest of the canonical JSON of the call
arguments (pydantic models and dataclasses are dumped field by field).
"""

import dataclasses
import hashlib
import json
import threading
import time
from collections import OrderedDict
from functools import wraps
from typing import Any, Callable, Dict, Optional

from pydantic import BaseModel

from srmaser.monitoring import get_metrics


def _encode(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump()
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _encode(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _encode(v) for k, v in value.items()}
    return value


def make_key(*args, **kwargs) -> str:
    """Create a cache key from arguments."""
    key_data = json.dumps({'args': _encode(args), 'kwargs': _encode(kwargs)}, sort_keys=True, default=repr)
    return hashlib.md5(key_data.encode()).hexdigest()


class SteadyStateCache:
    """In-memory LRU cache with TTL."""

    def __init__(self, max_entries: int = 4096, default_ttl: float = 3600.0):
        """
        Initialize cache.

        Args:
            max_entries: Oldest entries are evicted past this size
            default_ttl: Default time-to-live in seconds
        """
        self.max_entries = max_entries
        self.default_ttl = default_ttl
        self._cache: "OrderedDict[str, Dict[str, Any]]" = OrderedDict()
        self._lock = threading.RLock()
        self._evictions = 0

    def get(self, key: str) -> Optional[Any]:
        """Get a value from cache."""
        with self._lock:
            entry = self._cache.get(key)
            if entry is None:
                return None
            if entry['expires_at'] <= time.time():
                del self._cache[key]
                return None
            self._cache.move_to_end(key)
            return entry['value']

    def set(self, key: str, value: Any, ttl: Optional[float] = None) -> None:
        """Set a value in cache."""
        with self._lock:
            if ttl is None:
                ttl = self.default_ttl
            self._cache[key] = {
                'value': value,
                'expires_at': time.time() + ttl,
                'created_at': time.time(),
            }
            self._cache.move_to_end(key)
            while len(self._cache) > self.max_entries:
                self._cache.popitem(last=False)
                self._evictions += 1

    def delete(self, key: str) -> None:
        with self._lock:
            self._cache.pop(key, None)

    def clear(self) -> None:
        """Clear all cache entries."""
        with self._lock:
            self._cache.clear()

    def __len__(self) -> int:
        return len(self._cache)

    def get_stats(self) -> Dict[str, Any]:
        """Get cache statistics."""
        with self._lock:
            return {
                'entries': len(self._cache),
                'max_entries': self.max_entries,
                'evictions': self._evictions,
            }


# Global cache instance
_cache = SteadyStateCache()


def cached(ttl: Optional[float] = None, key_prefix: str = ''):
    """
    Decorator to cache function results.

    Args:
        ttl: Time-to-live in seconds (cache default when None)
        key_prefix: Prefix for cache keys
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            cache_key = f"{key_prefix}:{func.__name__}:{make_key(*args, **kwargs)}"

            result = _cache.get(cache_key)
            if result is not None:
                get_metrics().record_cache_hit()
                return result

            get_metrics().record_cache_miss()
            result = func(*args, **kwargs)
            _cache.set(cache_key, result, ttl)
            return result

        return wrapper
    return decorator


def get_cache() -> SteadyStateCache:
    """Get the global cache instance."""
    return _cache


def configure_cache(max_entries: int) -> None:
    """Resize the global cache."""
    with _cache._lock:
        _cache.max_entries = max(1, int(max_entries))


def clear_cache() -> None:
    """Clear the global cache."""
    _cache.clear()
