"""Profile-location disambiguation through a GeoNames-compatible search service."""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass
from typing import Protocol, Sequence

from ..canonical import digest
from ..engine import Component
from ..errors import AuthError, ProtocolError, QuotaExceeded
from ..frame import Frame
from ..persistence.cache import RequestCache
from .fixtures import FixtureStore
from .http import HttpClient, HttpRequest, RateLimitPolicy

logger = logging.getLogger(__name__)

USERNAME_ENV = "TD_GEO_USERNAME"
KIND = "GeoNamesDecoder"
COUNTRY, ADDRESS = "geo_location_country", "geo_location_address"

# GeoNames web service status codes
_AUTH_CODES = {10}  # user does not exist / not enabled
_QUOTA_CODES = {18, 19, 20}  # daily / hourly / weekly credit limit

_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class GeoResult:
    geo_location_country: str | None = None
    geo_location_address: str | None = None

    @property
    def resolved(self) -> bool:
        return self.geo_location_country is not None or self.geo_location_address is not None


def collapse(location: str) -> str:
    return _WS.sub(" ", location).strip()


def normalize_location(location: str) -> str:
    """Cache key form: trimmed, internal whitespace collapsed, lowercased."""
    return collapse(location).lower()


def location_key(location: str) -> str:
    return digest({"q": normalize_location(location)})


def check_status(body: bytes) -> dict:
    """Parse a response body, raising on the service's error signals."""
    try:
        payload = json.loads(body)
    except ValueError as exc:
        raise ProtocolError(f"geocoder response is not JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ProtocolError("geocoder response is not a JSON object")
    status = payload.get("status")
    if status:
        code = status.get("value")
        message = status.get("message", "")
        if code in _QUOTA_CODES:
            raise QuotaExceeded(f"geocoder quota exhausted: {message}")
        if code in _AUTH_CODES:
            raise AuthError(f"geocoder rejected the account: {message}")
        raise ProtocolError(f"geocoder error {code}: {message}")
    return payload


def parse_top_hit(body: bytes) -> GeoResult:
    """Map the top-ranked hit to (country, address); no hit gives both null."""
    payload = check_status(body)
    hits = payload.get("geonames") or []
    if not hits:
        return GeoResult()
    top = hits[0]
    country = top.get("countryName") or None
    address = top.get("name") or top.get("toponymName") or None
    return GeoResult(country, address)


class GeocoderBackend(Protocol):
    def search(self, query: str) -> bytes: ...


class GeoNamesBackend:
    def __init__(
        self,
        username: str,
        client: HttpClient,
        base_url: str = "http://api.geonames.org",
        max_rows: int = 1,
        recorder: FixtureStore | None = None,
    ):
        if not username:
            raise AuthError(f"geocoding needs a GeoNames username (set {USERNAME_ENV})")
        self._username = username
        self.client = client
        self.base_url = base_url.rstrip("/")
        self.max_rows = max_rows
        self.recorder = recorder

    @classmethod
    def from_env(cls, client: HttpClient, env=os.environ, **kwargs) -> GeoNamesBackend:
        return cls(env.get(USERNAME_ENV, ""), client, **kwargs)

    def search(self, query: str) -> bytes:
        request = HttpRequest(
            "GET",
            f"{self.base_url}/searchJSON",
            params={"q": query, "maxRows": str(self.max_rows), "username": self._username},
        )
        body = self.client.send(request).body
        if self.recorder is not None:
            check_status(body)
            self.recorder.save(KIND, {"q": normalize_location(query)}, body)
        return body


class FixtureGeocoderBackend:
    def __init__(self, store: FixtureStore):
        self.store = store
        self.calls = 0

    def search(self, query: str) -> bytes:
        self.calls += 1
        return self.store.load_bytes(KIND, {"q": normalize_location(query)})


def geocode(
    locations: Sequence[str | None],
    backend: GeocoderBackend,
    cache: RequestCache,
    map_batches=None,
) -> dict[str, list]:
    """Country and address columns aligned with ``locations``.

    Each distinct normalized location is looked up at most once per cache
    lifetime; the query sent is its first-seen spelling.
    """
    queries: dict[str, str] = {}
    row_keys = []
    for loc in locations:
        if loc is None or not collapse(loc):
            row_keys.append(None)
            continue
        key = location_key(loc)
        queries.setdefault(key, collapse(loc))
        row_keys.append(key)

    def resolve(key: str) -> GeoResult:
        body = cache.get_or_fetch(KIND, key, lambda: backend.search(queries[key]), validate=check_status)
        return parse_top_hit(body)

    keys = list(queries)
    runner = map_batches or (lambda fn, items: [fn(i) for i in items])
    resolved = dict(zip(keys, runner(resolve, keys)))
    country, address = [], []
    for key in row_keys:
        hit = resolved[key] if key is not None else GeoResult()
        country.append(hit.geo_location_country)
        address.append(hit.geo_location_address)
    return {COUNTRY: country, ADDRESS: address}


class GeoNamesDecoder(Component):
    """Country and address from the free-text profile location."""

    provides = (COUNTRY, ADDRESS)

    def __init__(
        self,
        backend: GeocoderBackend | None = None,
        cache: RequestCache | None = None,
        location_column: str = "user_location",
        policy: RateLimitPolicy | None = None,
    ):
        self.backend = backend
        self.cache = cache
        self.location_column = location_column
        self.policy = policy or RateLimitPolicy(max_requests=1000, window=3600.0)

    def inputs(self):
        return [self.location_column]

    def outputs(self):
        return [COUNTRY, ADDRESS]

    def _cache(self) -> RequestCache:
        if self.cache is None:
            workdir = self.context.workdir
            self.cache = RequestCache(workdir / "cache" if workdir is not None else None)
        return self.cache

    def infer(self, data: Frame):
        if self.backend is None:
            raise RuntimeError("GeoNamesDecoder has no backend configured")
        return geocode(data[self.location_column], self.backend, self._cache(), self.context.map_batches)

    def config(self):
        return {"location_column": self.location_column, "service": "geonames", "ranking": "top-hit"}

    @classmethod
    def from_config(cls, config, services=None):
        cfg = {k: v for k, v in config.items() if k not in ("service", "ranking")}
        comp = cls(**cfg)
        if services is not None:
            comp.backend = services.geocoder_backend(comp)
            comp.cache = services.cache()
        return comp
