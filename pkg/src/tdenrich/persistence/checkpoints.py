"""Durable per-component frame snapshots.

Layout under ``<workdir>/checkpoints``::

    000-input.csv          the ingested frame
    000-input.meta.json
    001-<kind>.csv         frame after component 1
    001-<kind>.meta.json   descriptor, seed, row count, content digest, schema

The meta file is written last, so a checkpoint without meta never counts.
"""

from __future__ import annotations

import json
import logging
import os
import re
from pathlib import Path

from filelock import FileLock, Timeout

from .._fs import atomic_write_bytes
from ..canonical import sha256_hex
from ..errors import IoError
from ..frame import Frame
from ..frame_io import dumps_csv, loads_csv

logger = logging.getLogger(__name__)

_META = re.compile(r"^(\d{3})-(.+)\.meta\.json$")
_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]+")


def _safe(kind: str) -> str:
    return _UNSAFE.sub("_", kind) or "component"


class CheckpointStore:
    def __init__(self, workdir: str | os.PathLike):
        self.workdir = Path(workdir)
        self.dir = self.workdir / "checkpoints"

    def _stem(self, position: int, kind: str) -> str:
        return f"{position:03d}-{_safe(kind)}"

    def write(self, position: int, kind: str, descriptor: dict, frame: Frame, seed: int) -> dict:
        stem = self._stem(position, kind)
        data = dumps_csv(frame).encode("utf-8")
        meta = {
            "position": position,
            "kind": kind,
            "descriptor": descriptor,
            "seed": seed,
            "row_count": frame.num_rows,
            "content_digest": frame.digest(),
            "file_digest": sha256_hex(data),
            "file": f"{stem}.csv",
            "schema": {"columns": frame.schema(), "row_ids": list(frame.row_ids)},
        }
        self.dir.mkdir(parents=True, exist_ok=True)
        atomic_write_bytes(self.dir / f"{stem}.csv", data)
        atomic_write_bytes(
            self.dir / f"{stem}.meta.json",
            json.dumps(meta, sort_keys=True, indent=1, ensure_ascii=False).encode("utf-8"),
        )
        return meta

    def metas(self) -> dict[int, dict]:
        """All checkpoint metadata by position (unreadable entries are skipped)."""
        found: dict[int, dict] = {}
        if not self.dir.is_dir():
            return found
        for entry in sorted(self.dir.iterdir()):
            m = _META.match(entry.name)
            if not m:
                continue
            try:
                meta = json.loads(entry.read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                logger.warning("ignoring unreadable checkpoint meta %s: %s", entry, exc)
                continue
            found[int(m.group(1))] = meta
        return found

    def load(self, meta: dict) -> Frame | None:
        """Load and verify a checkpoint frame; ``None`` if it is corrupt."""
        path = self.dir / meta["file"]
        try:
            data = path.read_bytes()
        except OSError as exc:
            logger.warning("checkpoint %s unreadable: %s", path, exc)
            return None
        if sha256_hex(data) != meta["file_digest"]:
            logger.warning("checkpoint %s fails its file digest, ignoring", path)
            return None
        frame = loads_csv(data.decode("utf-8"), meta["schema"], path)
        if frame.digest() != meta["content_digest"]:
            logger.warning("checkpoint %s fails its content digest, ignoring", path)
            return None
        return frame

    def clear(self, from_position: int = 0) -> None:
        if not self.dir.is_dir():
            return
        for entry in self.dir.iterdir():
            m = re.match(r"^(\d{3})-", entry.name)
            if m and int(m.group(1)) >= from_position:
                entry.unlink()

    def lock(self) -> FileLock:
        self.workdir.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.workdir / ".td.lock"), timeout=0)


class WorkdirLock:
    """Single-writer guard for a run directory."""

    def __init__(self, store: CheckpointStore):
        self._lock = store.lock()
        self._path = store.workdir

    def __enter__(self):
        try:
            self._lock.acquire()
        except Timeout:
            raise IoError(f"workdir {self._path} is locked by another run") from None
        return self

    def __exit__(self, *exc):
        self._lock.release()
        return False
