"""Durable artifacts: checkpoints, the request cache and pipeline manifests."""

from .cache import CacheEntry, RequestCache
from .checkpoints import CheckpointStore

__all__ = ["CacheEntry", "CheckpointStore", "RequestCache"]
