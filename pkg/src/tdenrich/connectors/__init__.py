"""Components backed by external services, each with live and fixture-replay backends."""

from .classify import (
    DemographicsClassifier,
    ExternalClassifier,
    FixtureClassifierBackend,
    HttpClassifierBackend,
    SubprocessClassifierBackend,
    classify_external,
)
from .fixtures import FixtureStore
from .geocode import (
    FixtureGeocoderBackend,
    GeoNamesBackend,
    GeoNamesDecoder,
    GeoResult,
    geocode,
    normalize_location,
)
from .http import HttpClient, HttpRequest, HttpResponse, RateLimiter, RateLimitPolicy, RequestsTransport
from .hydrate import FixtureHydrationBackend, HydrationResult, Rehydrate, TwitterV2Backend, hydrate

__all__ = [
    "DemographicsClassifier",
    "ExternalClassifier",
    "FixtureClassifierBackend",
    "FixtureGeocoderBackend",
    "FixtureHydrationBackend",
    "FixtureStore",
    "GeoNamesBackend",
    "GeoNamesDecoder",
    "GeoResult",
    "HttpClassifierBackend",
    "HttpClient",
    "HttpRequest",
    "HttpResponse",
    "HydrationResult",
    "RateLimitPolicy",
    "RateLimiter",
    "Rehydrate",
    "RequestsTransport",
    "SubprocessClassifierBackend",
    "TwitterV2Backend",
    "classify_external",
    "geocode",
    "hydrate",
    "normalize_location",
]
