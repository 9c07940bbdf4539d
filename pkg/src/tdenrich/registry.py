"""Component registry and the runtime services components are built with.

:class:`Services` decides, per run, whether connectors talk to live APIs or
replay recorded fixtures. It is deliberately kept out of component
configuration, so switching modes never changes a pipeline's identity.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .connectors.classify import (
    DemographicsClassifier,
    ExternalClassifier,
    FixtureClassifierBackend,
    HttpClassifierBackend,
    SubprocessClassifierBackend,
)
from .connectors.fixtures import FIXTURE_ENV, FixtureStore
from .connectors.geocode import FixtureGeocoderBackend, GeoNamesBackend, GeoNamesDecoder
from .connectors.http import HttpClient, RateLimitPolicy, RequestsTransport, Transport
from .connectors.hydrate import FixtureHydrationBackend, Rehydrate, TwitterV2Backend
from .engine import Component
from .errors import UnknownKind
from .persistence.cache import RequestCache
from .privacy import Anonymizer
from .transforms import SentimentClassifier, TopicAssigner

MODES = ("live", "fixtures")

BUILTIN_COMPONENTS: tuple[type[Component], ...] = (
    Rehydrate,
    GeoNamesDecoder,
    SentimentClassifier,
    TopicAssigner,
    ExternalClassifier,
    DemographicsClassifier,
    Anonymizer,
)


def default_registry() -> dict[str, type[Component]]:
    return {cls.kind_name(): cls for cls in BUILTIN_COMPONENTS}


def supplier_hints(column: str, registry: Mapping[str, type[Component]] | None = None) -> list[str]:
    registry = registry or default_registry()
    return sorted(kind for kind, cls in registry.items() if column in getattr(cls, "provides", ()))


@dataclass
class Services:
    mode: str = "live"
    fixture_dir: str | os.PathLike | None = None
    cache_dir: str | os.PathLike | None = None
    env: Mapping[str, str] = field(default_factory=lambda: dict(os.environ))
    transport: Transport | None = None
    salt: bytes | None = None
    record: bool = False
    sleep: Callable[[float], None] = time.sleep

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "fixtures" and self.fixture_dir is None and not self.env.get(FIXTURE_ENV):
            raise ValueError(f"fixtures mode needs a fixture directory (config or {FIXTURE_ENV})")
        self._cache: RequestCache | None = None

    def fixtures(self) -> FixtureStore:
        root = self.fixture_dir or self.env.get(FIXTURE_ENV)
        if not root:
            raise ValueError(f"no fixture directory configured (set {FIXTURE_ENV})")
        return FixtureStore(root)

    def _recorder(self) -> FixtureStore | None:
        return self.fixtures() if self.record else None

    def client(self, policy: RateLimitPolicy) -> HttpClient:
        return HttpClient(self.transport or RequestsTransport(), policy, sleep=self.sleep)

    def cache(self) -> RequestCache | None:
        if self.cache_dir is None:
            return None
        if self._cache is None:
            self._cache = RequestCache(self.cache_dir)
        return self._cache

    def hydration_backend(self, component: Rehydrate):
        if self.mode == "fixtures":
            return FixtureHydrationBackend(self.fixtures())
        return TwitterV2Backend.from_env(
            self.client(component.policy), self.env, fields=component.fields, recorder=self._recorder()
        )

    def geocoder_backend(self, component: GeoNamesDecoder):
        if self.mode == "fixtures":
            return FixtureGeocoderBackend(self.fixtures())
        return GeoNamesBackend.from_env(self.client(component.policy), self.env, recorder=self._recorder())

    def classifier_backend(self, component: ExternalClassifier):
        if self.mode == "fixtures":
            return FixtureClassifierBackend(self.fixtures(), component.name)
        endpoint = component.endpoint
        transport = endpoint.get("transport", "http")
        if transport == "subprocess":
            return SubprocessClassifierBackend(endpoint["command"], endpoint.get("timeout", 600.0))
        if transport == "http":
            headers = {}
            key = component.api_key or (self.env.get(endpoint["api_key_env"]) if "api_key_env" in endpoint else None)
            if key:
                headers["Authorization"] = f"Bearer {key}"
            policy = RateLimitPolicy(**endpoint.get("rate_limit", {}))
            return HttpClassifierBackend(
                endpoint["url"], self.client(policy), headers, recorder=self._recorder(), name=component.name
            )
        raise ValueError(f"unknown classifier transport {transport!r}")


def build_component(
    kind: str,
    config: Mapping[str, Any],
    services: Services | None = None,
    registry: Mapping[str, type[Component]] | None = None,
) -> Component:
    registry = registry or default_registry()
    try:
        cls = registry[kind]
    except KeyError:
        raise UnknownKind(f"no component registered under kind {kind!r}; known: {sorted(registry)}") from None
    return cls.from_config(dict(config), services)
