"""Recorded request/response files for credential-free, deterministic runs.

Layout: ``<root>/<kind>/<sha256 of canonical request JSON>.json``.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from .._fs import atomic_write_bytes
from ..canonical import canonical_json, digest
from ..errors import FixtureMiss

FIXTURE_ENV = "TD_FIXTURE_DIR"


def request_digest(request: Any) -> str:
    return digest(request)


class FixtureStore:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    @classmethod
    def from_env(cls, env=os.environ) -> FixtureStore | None:
        root = env.get(FIXTURE_ENV)
        return cls(root) if root else None

    def path(self, kind: str, request: Any) -> Path:
        return self.root / kind / f"{request_digest(request)}.json"

    def load_bytes(self, kind: str, request: Any) -> bytes:
        path = self.path(kind, request)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise FixtureMiss(kind, request, path) from None

    def load(self, kind: str, request: Any) -> Any:
        return json.loads(self.load_bytes(kind, request))

    def save(self, kind: str, request: Any, payload: Any) -> Path:
        path = self.path(kind, request)
        data = payload if isinstance(payload, bytes) else canonical_json(payload)
        atomic_write_bytes(path, data)
        return path
