"""Tweet hydration through the Twitter API v2 batch lookup endpoint."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

from ..engine import Component
from ..errors import AuthError, ProtocolError
from ..frame import Frame
from .fixtures import FixtureStore
from .http import HttpClient, HttpRequest, RateLimitPolicy

logger = logging.getLogger(__name__)

TOKEN_ENV = "TD_BEARER_TOKEN"
API_BATCH_LIMIT = 100
FIXTURE_KIND = "Rehydrate"

# output column -> (object, API field)
FIELD_MAP: dict[str, tuple[str, str]] = {
    "text": ("tweet", "text"),
    "author_id": ("tweet", "author_id"),
    "screen_name": ("user", "username"),
    "user_location": ("user", "location"),
    "profile_image_url": ("user", "profile_image_url"),
    "created_at": ("tweet", "created_at"),
    "lang": ("tweet", "lang"),
    "user_name": ("user", "name"),
    "user_description": ("user", "description"),
}
DEFAULT_FIELDS = ("text", "author_id", "screen_name", "user_location", "profile_image_url", "created_at")


@dataclass(frozen=True)
class HydrationResult:
    tweet_id: str
    text: str
    author_id: str | None
    screen_name: str | None
    user_location: str | None
    profile_image_url: str | None
    created_at: str | None
    tweet: Mapping | None = None
    user: Mapping | None = None

    def get(self, column: str):
        source, api_field = FIELD_MAP[column]
        obj = self.tweet if source == "tweet" else self.user
        if obj is None:
            return None
        value = obj.get(api_field)
        return value if value is None or isinstance(value, str) else json.dumps(value, sort_keys=True)


def parse_lookup_payload(payload: Mapping, ids: Sequence[str]) -> dict[str, HydrationResult | None]:
    """Map an API v2 ``GET /2/tweets`` response onto the requested ids.

    Ids absent from ``data`` (deleted, protected, never existed) map to None.
    """
    if not isinstance(payload, Mapping):
        raise ProtocolError("hydration payload is not a JSON object")
    users = {u.get("id"): u for u in payload.get("includes", {}).get("users", []) if isinstance(u, Mapping)}
    found: dict[str, HydrationResult] = {}
    for tweet in payload.get("data") or []:
        tid = str(tweet.get("id"))
        if tweet.get("text") is None:
            raise ProtocolError(f"tweet {tid} returned without text")
        user = users.get(tweet.get("author_id"))
        found[tid] = HydrationResult(
            tweet_id=tid,
            text=tweet["text"],
            author_id=tweet.get("author_id"),
            screen_name=user.get("username") if user else None,
            user_location=user.get("location") if user else None,
            profile_image_url=user.get("profile_image_url") if user else None,
            created_at=tweet.get("created_at"),
            tweet=tweet,
            user=user,
        )
    return {tid: found.get(tid) for tid in ids}


def split_payload(payload: Mapping, tid: str) -> dict:
    """The part of a batch response that concerns one id (fixture recording)."""
    tweets = [t for t in payload.get("data") or [] if str(t.get("id")) == tid]
    if not tweets:
        errors = [e for e in payload.get("errors") or [] if str(e.get("value", e.get("resource_id"))) == tid]
        return {"errors": errors or [{"value": tid, "title": "Not Found Error"}]}
    author = tweets[0].get("author_id")
    users = [u for u in payload.get("includes", {}).get("users", []) if u.get("id") == author]
    return {"data": tweets, "includes": {"users": users}}


class HydrationBackend(Protocol):
    def lookup(self, ids: Sequence[str]) -> dict[str, HydrationResult | None]: ...


class TwitterV2Backend:
    """Live backend: one ``GET /2/tweets?ids=...`` per batch of up to 100 ids."""

    def __init__(
        self,
        bearer_token: str,
        client: HttpClient,
        base_url: str = "https://api.twitter.com",
        fields: Iterable[str] = DEFAULT_FIELDS,
        recorder: FixtureStore | None = None,
    ):
        if not bearer_token:
            raise AuthError(f"hydration needs a bearer token (set {TOKEN_ENV})")
        self._token = bearer_token
        self.client = client
        self.base_url = base_url.rstrip("/")
        self.fields = tuple(fields)
        self.recorder = recorder

    @classmethod
    def from_env(cls, client: HttpClient, env=os.environ, **kwargs) -> TwitterV2Backend:
        return cls(env.get(TOKEN_ENV, ""), client, **kwargs)

    def _params(self, ids: Sequence[str]) -> dict[str, str]:
        tweet_fields = {"author_id", "created_at"}
        user_fields = {"username"}
        for col in self.fields:
            source, api_field = FIELD_MAP[col]
            (tweet_fields if source == "tweet" else user_fields).add(api_field)
        tweet_fields.discard("text")
        return {
            "ids": ",".join(ids),
            "expansions": "author_id",
            "tweet.fields": ",".join(sorted(tweet_fields)),
            "user.fields": ",".join(sorted(user_fields)),
        }

    def lookup(self, ids: Sequence[str]) -> dict[str, HydrationResult | None]:
        if len(ids) > API_BATCH_LIMIT:
            raise ValueError(f"at most {API_BATCH_LIMIT} ids per lookup")
        request = HttpRequest(
            "GET",
            f"{self.base_url}/2/tweets",
            params=self._params(ids),
            headers={"Authorization": f"Bearer {self._token}"},
        )
        resp = self.client.send(request)
        try:
            payload = json.loads(resp.body)
        except ValueError as exc:
            raise ProtocolError(f"hydration response is not JSON: {exc}") from exc
        if self.recorder is not None:
            for tid in ids:
                self.recorder.save(FIXTURE_KIND, {"tweet_id": tid}, split_payload(payload, tid))
        return parse_lookup_payload(payload, ids)


class FixtureHydrationBackend:
    """Replays per-id recordings; a missing recording raises FixtureMiss."""

    def __init__(self, store: FixtureStore):
        self.store = store
        self.calls = 0

    def lookup(self, ids: Sequence[str]) -> dict[str, HydrationResult | None]:
        self.calls += 1
        out = {}
        for tid in ids:
            payload = self.store.load(FIXTURE_KIND, {"tweet_id": tid})
            out.update(parse_lookup_payload(payload, [tid]))
        return out


def _as_id(value) -> str:
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise ValueError(f"tweet id {value!r} is not a decimal string")
    tid = str(value).strip()
    if not tid.isdecimal() or not tid.isascii():
        raise ValueError(f"tweet id {value!r} is not a decimal string")
    return tid


def batched(items: Sequence, size: int) -> list[list]:
    return [list(items[i : i + size]) for i in range(0, len(items), size)]


def hydrate(
    tweet_ids: Sequence,
    backend: HydrationBackend,
    fields: Sequence[str] = DEFAULT_FIELDS,
    batch_size: int = API_BATCH_LIMIT,
    map_batches=None,
) -> dict[str, list]:
    """Hydrated columns aligned with ``tweet_ids``; unknown ids give null cells."""
    ids = [_as_id(v) for v in tweet_ids]
    unique = list(dict.fromkeys(ids))
    batches = batched(unique, batch_size)
    runner = map_batches or (lambda fn, items: [fn(b) for b in items])
    results: dict[str, HydrationResult | None] = {}
    for part in runner(backend.lookup, batches):
        results.update(part)
    columns: dict[str, list] = {}
    for col in fields:
        cells = []
        for tid in ids:
            hit = results.get(tid)
            cells.append(hit.get(col) if hit is not None else None)
        columns[col] = cells
    return columns


class Rehydrate(Component):
    """Rebuild tweet and author fields from tweet ids."""

    provides = DEFAULT_FIELDS

    def __init__(
        self,
        backend: HydrationBackend | None = None,
        id_column: str = "tweet_id",
        fields: Sequence[str] = DEFAULT_FIELDS,
        batch_size: int = API_BATCH_LIMIT,
        policy: RateLimitPolicy | None = None,
    ):
        unknown = [f for f in fields if f not in FIELD_MAP]
        if unknown:
            raise ValueError(f"unknown hydration fields {unknown}; known: {sorted(FIELD_MAP)}")
        if not 1 <= batch_size <= API_BATCH_LIMIT:
            raise ValueError(f"batch_size must be within 1..{API_BATCH_LIMIT}")
        self.backend = backend
        self.id_column = id_column
        self.fields = tuple(fields)
        self.batch_size = batch_size
        self.policy = policy or RateLimitPolicy()

    def inputs(self):
        return [self.id_column]

    def outputs(self):
        return list(self.fields)

    def infer(self, data: Frame):
        if self.backend is None:
            raise RuntimeError("Rehydrate has no backend configured")
        return hydrate(data[self.id_column], self.backend, self.fields, self.batch_size, self.context.map_batches)

    def config(self):
        return {"id_column": self.id_column, "fields": list(self.fields), "batch_size": self.batch_size}

    @classmethod
    def from_config(cls, config, services=None):
        comp = cls(**config)
        if services is not None:
            comp.backend = services.hydration_backend(comp)
        return comp
