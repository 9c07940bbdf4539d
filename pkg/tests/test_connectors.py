from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from conftest import FakeClock, ScriptedTransport, response
from tdenrich.connectors.classify import (
    DemographicsClassifier,
    ExternalClassifier,
    FixtureClassifierBackend,
    HttpClassifierBackend,
    SubprocessClassifierBackend,
    classify_external,
)
from tdenrich.connectors.fixtures import FixtureStore
from tdenrich.connectors.geocode import (
    FixtureGeocoderBackend,
    GeoNamesBackend,
    GeoNamesDecoder,
    check_status,
    geocode,
    location_key,
    normalize_location,
)
from tdenrich.connectors.http import HttpClient, HttpRequest, RateLimiter, RateLimitPolicy
from tdenrich.connectors.hydrate import (
    DEFAULT_FIELDS,
    FixtureHydrationBackend,
    Rehydrate,
    TwitterV2Backend,
    hydrate,
)
from tdenrich.engine import Pipeline
from tdenrich.errors import (
    AuthError,
    ComponentFailure,
    FixtureMiss,
    ProtocolError,
    QuotaExceeded,
    SubprocessExitError,
    TransportError,
)
from tdenrich.frame import Frame
from tdenrich.persistence.cache import RequestCache
from tdenrich.registry import Services

FIXTURES = Path(__file__).parent / "fixtures"
NOT_FOUND = "999"


class FakeTwitter:
    """Answers ``GET /2/tweets`` like the v2 API for every id except NOT_FOUND."""

    def __init__(self):
        self.batches: list[list[str]] = []

    def __call__(self, request: HttpRequest):
        ids = request.params["ids"].split(",")
        self.batches.append(ids)
        data, users, errors = [], [], []
        for tid in ids:
            if tid == NOT_FOUND:
                errors.append({"value": tid, "detail": "Could not find tweet", "title": "Not Found Error"})
                continue
            data.append({"id": tid, "text": f"tweet {tid}", "author_id": f"u{tid}", "created_at": "2020-03-01T00:00:00.000Z"})
            users.append({"id": f"u{tid}", "username": f"name{tid}", "location": "Milan, Italy"})
        body = {"data": data, "includes": {"users": users}}
        if errors:
            body["errors"] = errors
        return response(200, json.dumps(body).encode())


def twitter_backend(transport, **kwargs):
    client = HttpClient(transport, RateLimitPolicy(max_requests=10_000, window=1), sleep=lambda s: None)
    return TwitterV2Backend("token", client, **kwargs)


# -- hydration ----------------------------------------------------------------


def test_fifty_ids_single_request():
    api = FakeTwitter()
    ids = [str(1000 + i) for i in range(50)]
    cols = hydrate(ids, twitter_backend(api))
    assert len(api.batches) == 1
    assert all(t is not None for t in cols["text"]) and len(cols["text"]) == 50
    assert set(cols) == set(DEFAULT_FIELDS)


def test_250_ids_batched_100_100_50():
    api = FakeTwitter()
    hydrate([str(1000 + i) for i in range(250)], twitter_backend(api))
    assert [len(b) for b in api.batches] == [100, 100, 50]


def test_missing_tweet_yields_null_row():
    cols = hydrate(["1", NOT_FOUND, "2"], twitter_backend(FakeTwitter()))
    assert cols["text"] == ["tweet 1", None, "tweet 2"]
    assert all(cols[c][1] is None for c in DEFAULT_FIELDS)
    assert cols["screen_name"][0] == "name1"


def test_duplicate_ids_requested_once():
    api = FakeTwitter()
    cols = hydrate(["5", "5", "6"], twitter_backend(api))
    assert api.batches == [["5", "6"]]
    assert cols["text"] == ["tweet 5", "tweet 5", "tweet 6"]


def test_request_shape():
    api = ScriptedTransport([response(200, b'{"data": []}')])
    twitter_backend(api).lookup(["1"])
    req = api.requests[0]
    assert req.url.endswith("/2/tweets") and req.headers["Authorization"] == "Bearer token"
    assert req.params["expansions"] == "author_id"
    assert "location" in req.params["user.fields"] and "username" in req.params["user.fields"]


def test_invalid_id_rejected():
    with pytest.raises(ValueError):
        hydrate(["12a"], twitter_backend(FakeTwitter()))


def test_missing_token():
    client = HttpClient(FakeTwitter())
    with pytest.raises(AuthError):
        TwitterV2Backend.from_env(client, env={})


def test_record_then_replay(tmp_path):
    store = FixtureStore(tmp_path)
    ids = ["1", NOT_FOUND, "3"]
    live = hydrate(ids, twitter_backend(FakeTwitter(), recorder=store))
    replay = FixtureHydrationBackend(store)
    assert hydrate(ids, replay) == live


def test_fixture_miss(tmp_path):
    with pytest.raises(FixtureMiss) as err:
        hydrate(["1"], FixtureHydrationBackend(FixtureStore(tmp_path)))
    assert "Rehydrate" in str(err.value)


def test_rehydrate_component(tmp_path):
    comp = Rehydrate(twitter_backend(FakeTwitter()))
    frame = Frame.from_dict({"tweet_id": ["1", NOT_FOUND, None]})
    out = Pipeline(seed=0).add_component(comp).run(frame, tmp_path)
    assert out["text"] == ("tweet 1", None, None)
    assert out.row_ids == (0, 1, 2)


# -- HTTP client --------------------------------------------------------------


def _client(transport, clock, **policy):
    policy = RateLimitPolicy(**{"max_requests": 100, "window": 1.0, **policy})
    limiter = RateLimiter.from_policy(policy, clock=clock, sleep=clock.sleep)
    return HttpClient(transport, policy, limiter=limiter, sleep=clock.sleep)


@pytest.mark.parametrize("status", [401, 403])
def test_auth_failure_is_not_retried(status, clock):
    api = ScriptedTransport([response(status)])
    with pytest.raises(AuthError):
        _client(api, clock).send(HttpRequest("GET", "http://x"))
    assert len(api.requests) == 1


def test_429_honours_retry_after(clock):
    api = ScriptedTransport([response(429, headers={"Retry-After": "30"}), response(200, b"ok")])
    assert _client(api, clock).send(HttpRequest("GET", "http://x")).body == b"ok"
    assert clock.sleeps == [30.0]


def test_5xx_backoff_then_transport_error(clock):
    api = ScriptedTransport([response(503)])
    with pytest.raises(TransportError):
        _client(api, clock, max_retries=3).send(HttpRequest("GET", "http://x"))
    assert len(api.requests) == 4
    assert clock.sleeps == [1.0, 2.0, 4.0]


def test_connection_error_retried(clock):
    api = ScriptedTransport([ConnectionError("reset"), response(200, b"ok")])
    assert _client(api, clock).send(HttpRequest("GET", "http://x")).body == b"ok"


def test_client_error_not_retried(clock):
    api = ScriptedTransport([response(404, b"nope")])
    with pytest.raises(TransportError):
        _client(api, clock).send(HttpRequest("GET", "http://x"))
    assert len(api.requests) == 1


def test_rate_limiter_sliding_window():
    clock = FakeClock()
    limiter = RateLimiter(5, 1.0, clock=clock, sleep=clock.sleep)
    stamps = []
    for _ in range(100):
        limiter.acquire()
        stamps.append(clock())
    for i in range(len(stamps) - 5):
        assert stamps[i + 5] - stamps[i] > 1.0


# -- geocoding ----------------------------------------------------------------


class CountingGeocoder:
    def __init__(self, body: bytes = b'{"geonames": []}'):
        self.queries: list[str] = []
        self.body = body

    def search(self, query: str) -> bytes:
        self.queries.append(query)
        return self.body


def test_milan_recorded_response():
    backend = FixtureGeocoderBackend(FixtureStore(FIXTURES))
    cols = geocode(["Milan, Italy"], backend, RequestCache())
    assert cols == {"geo_location_country": ["Italy"], "geo_location_address": ["Milan"]}


def test_unresolvable_location():
    cols = geocode(["asdfqwerty#!!"], CountingGeocoder(), RequestCache())
    assert cols == {"geo_location_country": [None], "geo_location_address": [None]}


def test_normalized_duplicates_one_request():
    backend = CountingGeocoder()
    geocode(["NYC", "nyc ", "NYC"], backend, RequestCache())
    assert backend.queries == ["NYC"]


def test_normalization():
    assert normalize_location("  New   York\tCity ") == "new york city"
    assert location_key("NYC") == location_key(" nyc")


def test_null_and_blank_locations_skip_lookup():
    backend = CountingGeocoder()
    cols = geocode([None, "   "], backend, RequestCache())
    assert backend.queries == [] and cols["geo_location_country"] == [None, None]


def test_warm_disk_cache(tmp_path):
    body = json.dumps({"geonames": [{"countryName": "Italy", "name": "Turin"}]}).encode()
    first = CountingGeocoder(body)
    geocode(["Turin", "turin"], first, RequestCache(tmp_path))
    second = CountingGeocoder(body)
    cols = geocode(["TURIN"], second, RequestCache(tmp_path))
    assert len(first.queries) == 1 and second.queries == []
    assert cols["geo_location_address"] == ["Turin"]


@pytest.mark.parametrize("code,exc", [(19, QuotaExceeded), (18, QuotaExceeded), (10, AuthError), (15, ProtocolError)])
def test_service_status_codes(code, exc):
    with pytest.raises(exc):
        check_status(json.dumps({"status": {"value": code, "message": "m"}}).encode())


def test_errors_are_not_cached():
    cache = RequestCache()
    bad = CountingGeocoder(b'{"status": {"value": 19, "message": "hourly limit"}}')
    with pytest.raises(QuotaExceeded):
        geocode(["Milan"], bad, cache)
    good = CountingGeocoder(b'{"geonames": []}')
    geocode(["Milan"], good, cache)
    assert good.queries == ["Milan"]


def test_geonames_request_shape(clock):
    api = ScriptedTransport([response(200, b'{"geonames": []}')])
    GeoNamesBackend("demo", _client(api, clock)).search("Milan, Italy")
    req = api.requests[0]
    assert req.url.endswith("/searchJSON")
    assert req.params == {"q": "Milan, Italy", "maxRows": "1", "username": "demo"}


def test_geocoder_component_uses_workdir_cache(tmp_path):
    backend = CountingGeocoder()
    frame = Frame.from_dict({"user_location": ["Milan", None, "milan"]})
    Pipeline(initial_columns=["user_location"], seed=0).add_component(GeoNamesDecoder(backend)).run(frame, tmp_path)
    assert backend.queries == ["Milan"]
    assert any((tmp_path / "cache" / "GeoNamesDecoder").iterdir())


# -- external classifiers -----------------------------------------------------


class FixedLabels:
    def __init__(self, labels):
        self.labels = labels
        self.calls = 0

    def classify(self, texts, width):
        self.calls += 1
        return [list(self.labels) for _ in texts]


def test_demographics_age_groups(tmp_path):
    backend = FixedLabels(["female", "30-39", False])
    pipe = Pipeline(initial_columns=["text"], seed=0).add_component(DemographicsClassifier(backend))
    frame = pipe.run(Frame.from_dict({"text": ["a", None, "b"]}), tmp_path)
    assert frame["age_group"] == ("30-39", None, "30-39")
    assert set(v for v in frame["age_group"] if v) <= {">=40", "30-39", "19-29", "<18"}
    assert frame["is_org"] == ("false", None, "false")


def test_empty_batch_sends_nothing():
    api = ScriptedTransport([response(200, b'{"labels": []}')])
    backend = HttpClassifierBackend("http://model", HttpClient(api))
    assert classify_external([], backend, ["label"]) == {"label": []}
    assert api.requests == []


def test_label_count_mismatch():
    api = ScriptedTransport([response(200, json.dumps({"labels": [["a"], ["b"]]}).encode())])
    backend = HttpClassifierBackend("http://model", HttpClient(api))
    with pytest.raises(ProtocolError):
        classify_external(["x", "y", "z"], backend, ["label"])


def test_out_of_vocabulary_label():
    preset = DemographicsClassifier()
    with pytest.raises(ProtocolError):
        classify_external(["x"], FixedLabels(["other", "<18", "true"]), preset.columns, allowed=preset.allowed)


def test_http_classifier_wire_format():
    api = ScriptedTransport([response(200, json.dumps({"labels": [["pos"], ["neg"]]}).encode())])
    backend = HttpClassifierBackend("http://model", HttpClient(api), {"Authorization": "Bearer k"})
    out = classify_external(["good", "bad"], backend, ["label"])
    assert out == {"label": ["pos", "neg"]}
    assert api.requests[0].json == {"texts": ["good", "bad"]}


def test_batches_are_split():
    backend = FixedLabels(["x"])
    classify_external([str(i) for i in range(70)], backend, ["label"], batch_size=32)
    assert backend.calls == 3


SCRIPT = "import sys, json\nfor line in sys.stdin:\n    t = json.loads(line)['text']\n    print(json.dumps({'labels': [len(t)]}))\n"


def test_subprocess_classifier():
    backend = SubprocessClassifierBackend([sys.executable, "-c", SCRIPT])
    assert classify_external(["ab", "abcd"], backend, ["n"]) == {"n": ["2", "4"]}


def test_subprocess_failure():
    backend = SubprocessClassifierBackend([sys.executable, "-c", "import sys; sys.exit(3)"])
    with pytest.raises(SubprocessExitError) as err:
        classify_external(["a"], backend, ["n"])
    assert err.value.returncode == 3


def test_classifier_secret_not_in_config_digest():
    a = ExternalClassifier(columns=["x"], api_key="one")
    b = ExternalClassifier(columns=["x"], api_key="two")
    assert a.describe().config_digest == b.describe().config_digest


def test_classifier_failure_wrapped(tmp_path):
    comp = ExternalClassifier(FixedLabels([1, 2]), columns=["x"])
    pipe = Pipeline(initial_columns=["text"], seed=0).add_component(comp)
    with pytest.raises(ComponentFailure) as err:
        pipe.run(Frame.from_dict({"text": ["a"]}), tmp_path)
    assert isinstance(err.value.cause, ProtocolError)


# -- fixture mode wiring ------------------------------------------------------


def test_services_fixture_mode(corpus50, tmp_path):
    services = Services(mode="fixtures", fixture_dir=corpus50.root, cache_dir=tmp_path / "cache", env={})
    pipe = Pipeline(seed=3)
    pipe.add_component(Rehydrate.from_config({}, services))
    pipe.add_component(GeoNamesDecoder.from_config({}, services))
    pipe.add_component(DemographicsClassifier.from_config({}, services))
    out = pipe.run(corpus50.frame, tmp_path)
    missing = [i for i, tid in enumerate(corpus50.frame["tweet_id"]) if tid in corpus50.missing_ids]
    assert missing and all(out["text"][i] is None for i in missing)
    assert {"Italy", "Germany"} & set(out["geo_location_country"])
    assert isinstance(pipe.components[2].backend, FixtureClassifierBackend)


def test_services_fixture_mode_needs_directory():
    with pytest.raises(ValueError):
        Services(mode="fixtures", env={})
