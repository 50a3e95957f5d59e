from __future__ import annotations

"""Utility modules for lsvlab."""

from .cache import OperatorCache, cached_build
from .ensemble import run_tasks, stream_chunks
from .io import config_hash, write_json, write_table
from .markov import stationary_vector, total_variation_distance

__all__ = [
    "OperatorCache",
    "cached_build",
    "run_tasks",
    "stream_chunks",
    "config_hash",
    "write_json",
    "write_table",
    "stationary_vector",
    "total_variation_distance",
]
