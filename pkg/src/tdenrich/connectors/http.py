"""HTTP plumbing shared by the connectors: transport, rate limiting, retries."""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol

from ..errors import AuthError, TransportError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HttpRequest:
    method: str
    url: str
    params: Mapping[str, str] = field(default_factory=dict)
    headers: Mapping[str, str] = field(default_factory=dict)
    json: Any = None


@dataclass(frozen=True)
class HttpResponse:
    status: int
    body: bytes = b""
    headers: Mapping[str, str] = field(default_factory=dict)

    def header(self, name: str) -> str | None:
        lname = name.lower()
        for k, v in self.headers.items():
            if k.lower() == lname:
                return v
        return None


class Transport(Protocol):
    def __call__(self, request: HttpRequest) -> HttpResponse: ...


class RequestsTransport:
    """Live transport backed by a :class:`requests.Session`.

    Network failures surface as :class:`ConnectionError` so the retry loop
    can treat them uniformly.
    """

    def __init__(self, timeout: float = 30.0, session=None):
        import requests

        self._requests = requests
        self.session = session or requests.Session()
        self.timeout = timeout

    def __call__(self, request: HttpRequest) -> HttpResponse:
        try:
            resp = self.session.request(
                request.method,
                request.url,
                params=dict(request.params) or None,
                headers=dict(request.headers) or None,
                json=request.json,
                timeout=self.timeout,
            )
        except self._requests.RequestException as exc:
            raise ConnectionError(str(exc)) from exc
        return HttpResponse(resp.status_code, resp.content, dict(resp.headers))


@dataclass(frozen=True)
class RateLimitPolicy:
    max_requests: int = 300
    window: float = 900.0
    max_retries: int = 5
    backoff_initial: float = 1.0
    backoff_multiplier: float = 2.0
    backoff_max: float = 900.0

    def __post_init__(self):
        if self.max_requests < 1 or self.window <= 0:
            raise ValueError("rate limit needs max_requests >= 1 and window > 0")
        if self.max_retries < 0 or self.backoff_initial < 0 or self.backoff_multiplier < 1:
            raise ValueError("invalid retry/backoff settings")

    def to_dict(self) -> dict:
        return {
            "max_requests": self.max_requests,
            "window": self.window,
            "max_retries": self.max_retries,
            "backoff_initial": self.backoff_initial,
            "backoff_multiplier": self.backoff_multiplier,
            "backoff_max": self.backoff_max,
        }

    def backoff(self, attempt: int) -> float:
        return min(self.backoff_initial * self.backoff_multiplier**attempt, self.backoff_max)


class RateLimiter:
    """Sliding-window log: at most ``max_requests`` grants in any ``window`` seconds.

    A plain token bucket refilled at R/W admits up to 2R requests in some
    W-length interval (full bucket plus refill); keeping the last R grant
    times bounds every interval. ``guard`` pads the window to absorb the
    delay between a grant and the request reaching the wire.
    """

    def __init__(
        self,
        max_requests: int,
        window: float,
        *,
        guard: float = 0.01,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.max_requests = max_requests
        self.window = window
        self.guard = guard
        self._clock = clock
        self._sleep = sleep
        self._grants: deque[float] = deque()
        self._lock = threading.Lock()

    @classmethod
    def from_policy(cls, policy: RateLimitPolicy, **kwargs) -> RateLimiter:
        return cls(policy.max_requests, policy.window, **kwargs)

    def acquire(self) -> None:
        span = self.window + self.guard
        while True:
            with self._lock:
                now = self._clock()
                while self._grants and now >= self._grants[0] + span:
                    self._grants.popleft()
                if len(self._grants) < self.max_requests:
                    self._grants.append(now)
                    return
                wait = self._grants[0] + span - now
            # floor the sleep: a rounding-sized wait may not move a float clock
            self._sleep(max(wait, 1e-6))


def _retry_delay(resp: HttpResponse) -> float | None:
    """Server-requested wait from ``Retry-After`` or ``x-rate-limit-reset``."""
    retry_after = resp.header("retry-after")
    if retry_after:
        try:
            return max(0.0, float(retry_after))
        except ValueError:
            pass
    reset = resp.header("x-rate-limit-reset")
    if reset:
        try:
            return max(0.0, float(reset) - time.time())
        except ValueError:
            pass
    return None


class HttpClient:
    """Rate-limited requests with exponential backoff on throttling and transient errors."""

    def __init__(
        self,
        transport: Transport,
        policy: RateLimitPolicy | None = None,
        *,
        limiter: RateLimiter | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.transport = transport
        self.policy = policy or RateLimitPolicy()
        self.limiter = limiter or RateLimiter.from_policy(self.policy)
        self._sleep = sleep

    def send(self, request: HttpRequest) -> HttpResponse:
        attempt = 0
        while True:
            self.limiter.acquire()
            server_delay = None
            try:
                resp = self.transport(request)
            except (ConnectionError, TimeoutError) as exc:
                reason = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status in (401, 403):
                    raise AuthError(f"{request.url} rejected credentials (HTTP {resp.status})")
                if resp.status == 429 or resp.status >= 500:
                    reason = f"HTTP {resp.status}"
                    server_delay = _retry_delay(resp)
                elif resp.status >= 400:
                    snippet = resp.body[:200].decode("utf-8", "replace")
                    raise TransportError(f"{request.url} returned HTTP {resp.status}: {snippet}")
                else:
                    return resp
            if attempt >= self.policy.max_retries:
                raise TransportError(f"{request.url} failed after {attempt + 1} attempts ({reason})")
            delay = self.policy.backoff(attempt)
            if server_delay is not None:
                delay = min(max(delay, server_delay), self.policy.backoff_max)
            logger.warning("%s: %s, retrying in %.1fs", request.url, reason, delay)
            self._sleep(delay)
            attempt += 1
