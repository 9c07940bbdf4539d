from __future__ import annotations

import os

import pytest
from hypothesis import settings

from tdenrich.connectors.http import HttpResponse
from tdenrich.testing import write_fixtures

settings.register_profile("ci", deadline=None, max_examples=100)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


class FakeClock:
    """Deterministic monotonic clock whose sleep advances time."""

    def __init__(self, start: float = 1000.0):
        self.now = start
        self.sleeps: list[float] = []

    def __call__(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        self.now += max(0.0, seconds)


class ScriptedTransport:
    """Answers requests from a list of responses, recording what was sent."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, request):
        self.requests.append(request)
        item = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(item, BaseException):
            raise item
        return item


def response(status: int = 200, body: bytes = b"{}", headers=None) -> HttpResponse:
    return HttpResponse(status, body, dict(headers or {}))


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture(scope="session")
def corpus50(tmp_path_factory):
    return write_fixtures(tmp_path_factory.mktemp("fixtures50"), 50, seed=1)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {title}")
