"""Persistent request cache, keyed by (component kind, request digest).

Entries live in ``<root>/<kind>/<digest>`` and are written by temp file +
rename, so concurrent writers of one key never produce a torn value and a
crash never corrupts an earlier entry. Concurrent in-process lookups of the
same missing key collapse to a single backend call.
"""

from __future__ import annotations

import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from .._fs import atomic_write_bytes
from ..errors import IoError

_DIGEST = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True)
class CacheEntry:
    kind: str
    key: str
    value: bytes
    stored_at: datetime


class _Call:
    __slots__ = ("event", "value", "error")

    def __init__(self):
        self.event = threading.Event()
        self.value: bytes | None = None
        self.error: BaseException | None = None


class RequestCache:
    """Disk-backed when ``root`` is given, otherwise process-local."""

    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else None
        self._memory: dict[tuple[str, str], tuple[bytes, datetime]] = {}
        self._lock = threading.Lock()
        self._inflight: dict[tuple[str, str], _Call] = {}
        self.hits = 0
        self.misses = 0

    def _path(self, kind: str, key: str) -> Path:
        if not _DIGEST.match(key):
            raise ValueError(f"cache key must be a SHA-256 hex digest, got {key!r}")
        if not kind or "/" in kind or kind.startswith("."):
            raise ValueError(f"invalid cache kind {kind!r}")
        return self.root / kind / key

    def entry(self, kind: str, key: str) -> CacheEntry | None:
        if self.root is None:
            with self._lock:
                hit = self._memory.get((kind, key))
            return CacheEntry(kind, key, hit[0], hit[1]) if hit else None
        path = self._path(kind, key)
        try:
            value = path.read_bytes()
            mtime = path.stat().st_mtime
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise IoError(f"cache read failed for {path}: {exc}") from exc
        return CacheEntry(kind, key, value, datetime.fromtimestamp(mtime, tz=timezone.utc))

    def get(self, kind: str, key: str) -> bytes | None:
        entry = self.entry(kind, key)
        return entry.value if entry else None

    def put(self, kind: str, key: str, value: bytes) -> None:
        if self.root is None:
            with self._lock:
                self._memory[(kind, key)] = (bytes(value), datetime.now(timezone.utc))
            return
        try:
            atomic_write_bytes(self._path(kind, key), bytes(value))
        except OSError as exc:
            raise IoError(f"cache write failed for {kind}/{key}: {exc}") from exc

    def get_or_fetch(
        self,
        kind: str,
        key: str,
        fetch: Callable[[], bytes],
        validate: Callable[[bytes], None] | None = None,
    ) -> bytes:
        """Cached value, or ``fetch()`` once per key even under concurrency.

        ``validate`` runs before storing; if it raises, nothing is cached.
        """
        cached = self.get(kind, key)
        if cached is not None:
            with self._lock:
                self.hits += 1
            return cached
        with self._lock:
            call = self._inflight.get((kind, key))
            leader = call is None
            if leader:
                call = self._inflight[(kind, key)] = _Call()
        if not leader:
            call.event.wait()
            if call.error is not None:
                raise call.error
            with self._lock:
                self.hits += 1
            return call.value
        try:
            value = self.get(kind, key)
            if value is None:
                with self._lock:
                    self.misses += 1
                value = fetch()
                if validate is not None:
                    validate(value)
                self.put(kind, key, value)
            else:
                with self._lock:
                    self.hits += 1
            call.value = value
            return value
        except BaseException as exc:
            call.error = exc
            raise
        finally:
            call.event.set()
            with self._lock:
                del self._inflight[(kind, key)]
