from __future__ import annotations

"""Disk cache for built transfer matrices."""

import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Optional

from diskcache import Cache

logger = logging.getLogger(__name__)


class OperatorCache:
    """Caches discretized operators (Ulam and chain matrices) to disk."""

    def __init__(
        self,
        cache_dir: Optional[Path] = None,
        max_size_gb: float = 2.0,
    ):
        """Initialize operator cache.

        Args:
            cache_dir: Directory for cache. Defaults to ~/.lsvlab/cache
            max_size_gb: Maximum cache size in gigabytes.
        """
        if cache_dir is None:
            cache_dir = Path.home() / ".lsvlab" / "cache"
        cache_dir = Path(cache_dir)

        cache_dir.mkdir(parents=True, exist_ok=True)
        self.cache_dir = cache_dir
        self.max_size = int(max_size_gb * 1024 * 1024 * 1024)

        self._cache = Cache(str(cache_dir), size_limit=self.max_size)

    @staticmethod
    def make_key(*args, **kwargs) -> str:
        """SHA-256 of the JSON-encoded arguments.

        Args:
            *args: Positional arguments to hash.
            **kwargs: Keyword arguments to hash.

        Returns:
            Hex digest.
        """
        key_data = json.dumps({"args": args, "kwargs": kwargs}, sort_keys=True, default=str)
        return hashlib.sha256(key_data.encode()).hexdigest()

    def get(self, key: str) -> Optional[Any]:
        """Cached value or None."""
        try:
            data = self._cache.get(key)
        except Exception as exc:  # corrupt entries behave as misses
            logger.warning("cache read failed for %s: %s", key[:12], exc)
            return None
        if data is None:
            return None
        return data.get("value")

    def set(self, key: str, value: Any) -> None:
        data = {
            "value": value,
            "_cached_at": datetime.now().isoformat(),
        }
        self._cache.set(key, data)

    def delete(self, key: str) -> bool:
        return self._cache.delete(key)

    def clear(self) -> None:
        """Clear all cached data."""
        self._cache.clear()

    def get_or_build(self, key: str, build_func: Callable[[], Any]) -> Any:
        """Get cached value or build and cache it.

        Args:
            key: Cache key.
            build_func: Function to call if not cached.

        Returns:
            Cached or freshly built value.
        """
        cached = self.get(key)
        if cached is not None:
            logger.debug("operator cache hit %s", key[:12])
            return cached

        value = build_func()
        self.set(key, value)
        return value

    def get_stats(self) -> dict:
        """Cache statistics."""
        return {
            "entries": len(self._cache),
            "size_bytes": self._cache.volume(),
            "max_size_bytes": self.max_size,
            "utilization_percent": (self._cache.volume() / self.max_size) * 100,
        }

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self._cache.close()

    def close(self) -> None:
        """Close the cache."""
        self._cache.close()


def cached_build(cache: Optional[OperatorCache], key: str, build_func: Callable[[], Any]) -> Any:
    """build_func() through the cache when one is given."""
    if cache is None:
        return build_func()
    return cache.get_or_build(key, build_func)
