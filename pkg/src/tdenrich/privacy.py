"""Pseudo-anonymization: identifier removal, keyed hashing, label swapping.

Applied in the fixed order drop -> hash -> swap. Hashing uses HMAC-SHA-256
with a per-run random salt, so equal inputs map to equal codes within a run
while public identifiers cannot be recovered by hashing a dictionary of
candidates. The salt never leaves memory unless ``persist_salt`` is used.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import math
import os
import secrets
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from ._fs import atomic_write_bytes
from .engine import TerminalStage, make_rng
from .errors import PolicyError, TypeMismatch, UnknownColumn
from .frame import Column, Frame

logger = logging.getLogger(__name__)

DEFAULT_DROP = frozenset({"tweet_id", "author_id", "profile_image_url", "created_at"})
DEFAULT_HASH = frozenset({"screen_name"})
DEFAULT_SWAP_FRACTION = 0.10
MIN_SALT_BYTES = 32
HASH_HEX_CHARS = 16


def new_salt() -> bytes:
    return secrets.token_bytes(MIN_SALT_BYTES)


def load_or_create_salt(path: str | os.PathLike) -> bytes:
    """Read a persisted salt (hex), creating it with owner-only permissions if absent."""
    path = Path(path)
    if path.exists():
        salt = bytes.fromhex(path.read_text(encoding="ascii").strip())
        if len(salt) < MIN_SALT_BYTES:
            raise PolicyError(f"persisted salt in {path} is shorter than {MIN_SALT_BYTES} bytes")
        return salt
    salt = new_salt()
    atomic_write_bytes(path, salt.hex().encode("ascii") + b"\n", mode=0o600)
    return salt


@dataclass
class PrivacyPolicy:
    drop_columns: frozenset[str] = DEFAULT_DROP
    hash_columns: frozenset[str] = DEFAULT_HASH
    swap_columns: frozenset[str] = frozenset()
    swap_fraction: float = DEFAULT_SWAP_FRACTION
    strict: bool = False
    secret_salt: bytes = field(default_factory=new_salt, repr=False)
    salt_persisted: bool = False

    def __post_init__(self):
        self.drop_columns = frozenset(self.drop_columns)
        self.hash_columns = frozenset(self.hash_columns)
        self.swap_columns = frozenset(self.swap_columns)
        pairs = [
            ("drop", "hash", self.drop_columns & self.hash_columns),
            ("drop", "swap", self.drop_columns & self.swap_columns),
            ("hash", "swap", self.hash_columns & self.swap_columns),
        ]
        for a, b, both in pairs:
            if both:
                raise PolicyError(f"columns {sorted(both)} appear in both the {a} and {b} sets")
        if not 0.0 <= float(self.swap_fraction) <= 1.0:
            raise PolicyError(f"swap_fraction must be in [0, 1], got {self.swap_fraction}")
        self.swap_fraction = float(self.swap_fraction)
        if len(self.secret_salt) < MIN_SALT_BYTES:
            raise PolicyError(f"salt must be at least {MIN_SALT_BYTES} bytes")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], salt: bytes | None = None) -> PrivacyPolicy:
        known = {"drop_columns", "hash_columns", "swap_columns", "swap_fraction", "strict"}
        unknown = set(data) - known
        if unknown:
            raise PolicyError(f"unknown privacy policy keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {k: data[k] for k in known if k in data}
        if salt is not None:
            kwargs["secret_salt"] = salt
            kwargs["salt_persisted"] = True
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | os.PathLike, salt: bytes | None = None) -> PrivacyPolicy:
        path = Path(path)
        raw = path.read_bytes()
        try:
            if path.suffix.lower() == ".toml":
                data = _toml_loads(raw.decode("utf-8"))
            else:
                data = json.loads(raw)
        except ValueError as exc:
            raise PolicyError(f"cannot parse privacy policy {path}: {exc}") from exc
        return cls.from_mapping(data.get("privacy", data), salt)

    def summary(self) -> dict:
        """Policy description safe to publish: the salt is never included."""
        return {
            "drop_columns": sorted(self.drop_columns),
            "hash_columns": sorted(self.hash_columns),
            "swap_columns": sorted(self.swap_columns),
            "swap_fraction": self.swap_fraction,
            "strict": self.strict,
            "hash": f"hmac-sha256/{HASH_HEX_CHARS}hex",
            "salt_mode": "persisted" if self.salt_persisted else "ephemeral",
        }


def _toml_loads(text: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    return tomllib.loads(text)


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


def _resolve(frame: Frame, names: Iterable[str], strict: bool, what: str) -> list[str]:
    names = sorted(names)
    missing = [n for n in names if n not in frame]
    if missing:
        if strict:
            raise UnknownColumn(missing, where=f"frame ({what})")
        logger.warning("%s: columns %s not present, skipping", what, missing)
    return [n for n in names if n in frame]


def drop_identifiers(frame: Frame, policy: PrivacyPolicy, strict: bool | None = None) -> Frame:
    strict = policy.strict if strict is None else strict
    present = _resolve(frame, policy.drop_columns, strict, "drop")
    return frame.drop_columns(present) if present else frame


def hash_value(value: str, salt: bytes) -> str:
    mac = hmac.new(salt, value.encode("utf-8"), hashlib.sha256)
    return mac.hexdigest()[:HASH_HEX_CHARS]


def hash_column(frame: Frame, column_name: str, salt: bytes) -> Frame:
    """Replace each non-null text cell by its truncated keyed digest."""
    col = frame.column(column_name)
    if col.dtype not in ("str", "null"):
        raise TypeMismatch(f"cannot hash {col.dtype} column {column_name!r}; expected text")
    cache: dict[str, str] = {}
    hashed = []
    for v in col.cells:
        if v is None:
            hashed.append(None)
            continue
        h = cache.get(v)
        if h is None:
            h = cache[v] = hash_value(v, salt)
        hashed.append(h)
    return frame.replace_column(Column(column_name, hashed))


def swap_count(n: int, fraction: float) -> int:
    """Rows exchanged for ``n`` rows at ``fraction``: the largest even count <= fraction * n."""
    # guard against p*n landing just under an integer (0.29 * 100 == 28.999...)
    return 2 * math.floor(fraction * n / 2 + 1e-9)


def plan_swaps(n: int, fraction: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Random perfect matching on a uniformly chosen subset of row positions."""
    m = swap_count(n, fraction)
    if m == 0:
        return []
    # choice without replacement yields the subset in random order, so
    # consecutive pairs form a uniformly random matching on it
    chosen = rng.choice(n, size=m, replace=False)
    return [(int(chosen[i]), int(chosen[i + 1])) for i in range(0, m, 2)]


def _as_rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(seed, 0)


def swap_labels(
    frame: Frame,
    label_columns: Iterable[str],
    fraction: float,
    seed: int | np.random.Generator,
) -> Frame:
    return _swap(frame, label_columns, fraction, _as_rng(seed))[0]


def _swap(frame: Frame, label_columns: Iterable[str], fraction: float, rng) -> tuple[Frame, int]:
    label_columns = sorted(label_columns)
    missing = [c for c in label_columns if c not in frame]
    if missing:
        raise UnknownColumn(missing, where="frame (swap)")
    if not 0.0 <= fraction <= 1.0:
        raise PolicyError(f"swap fraction must be in [0, 1], got {fraction}")
    if not label_columns:
        return frame, 0
    pairs = plan_swaps(frame.num_rows, fraction, rng)
    if not pairs:
        return frame, 0
    for name in label_columns:
        cells = list(frame[name])
        for a, b in pairs:
            cells[a], cells[b] = cells[b], cells[a]
        frame = frame.replace_column(Column(name, cells))
    return frame, 2 * len(pairs)


@dataclass
class AnonymizationSummary:
    dropped: list[str]
    hashed: list[str]
    swapped_columns: list[str]
    rows_swapped: int

    def format(self) -> str:
        return (
            f"dropped columns: {', '.join(self.dropped) or '(none)'}\n"
            f"hashed columns:  {', '.join(self.hashed) or '(none)'}\n"
            f"swapped labels:  {', '.join(self.swapped_columns) or '(none)'} ({self.rows_swapped} rows)"
        )


def anonymize(
    frame: Frame, policy: PrivacyPolicy, seed: int | np.random.Generator
) -> tuple[Frame, AnonymizationSummary]:
    """Apply drop -> hash -> swap."""
    dropped = _resolve(frame, policy.drop_columns, policy.strict, "drop")
    if dropped:
        frame = frame.drop_columns(dropped)
    hashed = _resolve(frame, policy.hash_columns, policy.strict, "hash")
    for name in hashed:
        frame = hash_column(frame, name, policy.secret_salt)
    frame, swapped = _swap(frame, policy.swap_columns, policy.swap_fraction, _as_rng(seed))
    return frame, AnonymizationSummary(dropped, hashed, sorted(policy.swap_columns), swapped)


class Anonymizer(TerminalStage):
    """Terminal pipeline stage applying a :class:`PrivacyPolicy`.

    Label swapping draws from the pipeline's generator for this position.
    """

    def __init__(self, policy: PrivacyPolicy | None = None):
        self.policy = policy or PrivacyPolicy()
        self.last_summary: AnonymizationSummary | None = None

    def inputs(self):
        required = set(self.policy.swap_columns)
        if self.policy.strict:
            required |= self.policy.drop_columns | self.policy.hash_columns
        return sorted(required)

    def apply(self, frame: Frame) -> Frame:
        out, self.last_summary = anonymize(frame, self.policy, self.context.rng)
        return out

    def config(self):
        return self.policy.summary()

    @classmethod
    def from_config(cls, config, services=None):
        cfg = {k: v for k, v in config.items() if k not in ("hash", "salt_mode")}
        salt = getattr(services, "salt", None) if services is not None else None
        return cls(PrivacyPolicy.from_mapping(cfg, salt))
