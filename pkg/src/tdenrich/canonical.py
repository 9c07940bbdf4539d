"""Canonical JSON encoding and SHA-256 helpers.

Canonical form: sorted keys, UTF-8, no insignificant whitespace. Every digest
in the package is computed over these bytes so that it is stable across
machines and Python versions.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> bytes:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest(obj: Any) -> str:
    """SHA-256 lowercase hex of the canonical encoding of ``obj``."""
    return sha256_hex(canonical_json(obj))
