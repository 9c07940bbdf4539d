"""Adapter for externally hosted classifiers (transformer models, demographics).

Two wire protocols:

* HTTP: ``POST {"texts": [...]}`` answered by ``{"labels": [[...], ...]}``,
  one inner list per text holding one value per output column.
* subprocess: one ``{"text": ...}`` JSON object per input line, one
  ``{"labels": [...]}`` object per output line, in the same order.
"""

from __future__ import annotations

import json
import logging
import subprocess
from typing import Any, Mapping, Protocol, Sequence

from ..engine import Component
from ..errors import ProtocolError, SubprocessExitError
from ..frame import Frame
from .fixtures import FixtureStore
from .http import HttpClient, HttpRequest

logger = logging.getLogger(__name__)

KIND = "ExternalClassifier"

PRESETS: dict[str, dict[str, Any]] = {
    "demographics": {
        "columns": ["gender", "age_group", "is_org"],
        "allowed": {
            "gender": ["male", "female"],
            "age_group": [">=40", "30-39", "19-29", "<18"],
            "is_org": ["true", "false"],
        },
    },
}


def as_text_cell(value: Any) -> str | None:
    if value is None or isinstance(value, str):
        return value
    return json.dumps(value)


def _label_rows(payload: Any, expected: int, width: int) -> list[list]:
    if not isinstance(payload, Mapping) or "labels" not in payload:
        raise ProtocolError("classifier response lacks a 'labels' array")
    labels = payload["labels"]
    if not isinstance(labels, list):
        raise ProtocolError("'labels' is not an array")
    if len(labels) != expected:
        raise ProtocolError(f"classifier returned {len(labels)} labels for {expected} texts")
    rows = []
    for i, row in enumerate(labels):
        if not isinstance(row, list):
            if width != 1:
                raise ProtocolError(f"label {i} is a scalar but {width} columns are expected")
            row = [row]
        if len(row) != width:
            raise ProtocolError(f"label {i} has {len(row)} values, expected {width}")
        rows.append(row)
    return rows


class ClassifierBackend(Protocol):
    def classify(self, texts: Sequence[str], width: int) -> list[list]: ...


class HttpClassifierBackend:
    def __init__(
        self,
        url: str,
        client: HttpClient,
        headers: Mapping[str, str] | None = None,
        recorder: FixtureStore | None = None,
        name: str | None = None,
    ):
        self.url = url
        self.client = client
        self.headers = dict(headers or {})
        self.recorder = recorder
        self.name = name or url

    def classify(self, texts: Sequence[str], width: int) -> list[list]:
        if not texts:
            return []
        resp = self.client.send(HttpRequest("POST", self.url, headers=self.headers, json={"texts": list(texts)}))
        try:
            payload = json.loads(resp.body)
        except ValueError as exc:
            raise ProtocolError(f"classifier response is not JSON: {exc}") from exc
        rows = _label_rows(payload, len(texts), width)
        if self.recorder is not None:
            for text, row in zip(texts, rows):
                self.recorder.save(KIND, {"model": self.name, "text": text}, {"labels": row})
        return rows


class SubprocessClassifierBackend:
    def __init__(self, command: Sequence[str], timeout: float | None = 600.0):
        self.command = list(command)
        self.timeout = timeout

    def classify(self, texts: Sequence[str], width: int) -> list[list]:
        if not texts:
            return []
        stdin = "".join(json.dumps({"text": t}, ensure_ascii=False) + "\n" for t in texts)
        try:
            proc = subprocess.run(
                self.command, input=stdin, capture_output=True, text=True, encoding="utf-8", timeout=self.timeout
            )
        except subprocess.TimeoutExpired as exc:
            raise SubprocessExitError(self.command, -1, f"timed out after {exc.timeout}s") from exc
        if proc.returncode != 0:
            raise SubprocessExitError(self.command, proc.returncode, proc.stderr)
        lines = [line for line in proc.stdout.splitlines() if line.strip()]
        try:
            objs = [json.loads(line) for line in lines]
        except ValueError as exc:
            raise ProtocolError(f"classifier process wrote malformed JSON: {exc}") from exc
        if len(objs) != len(texts):
            raise ProtocolError(f"classifier process answered {len(objs)} lines for {len(texts)} texts")
        rows = []
        for obj in objs:
            rows.extend(_label_rows({"labels": [obj.get("labels") if isinstance(obj, Mapping) else None]}, 1, width))
        return rows


class FixtureClassifierBackend:
    def __init__(self, store: FixtureStore, name: str):
        self.store = store
        self.name = name
        self.calls = 0

    def classify(self, texts: Sequence[str], width: int) -> list[list]:
        self.calls += 1
        rows = []
        for text in texts:
            payload = self.store.load(KIND, {"model": self.name, "text": text})
            rows.extend(_label_rows({"labels": [payload.get("labels")]}, 1, width))
        return rows


def classify_external(
    texts: Sequence[str],
    backend: ClassifierBackend,
    columns: Sequence[str],
    batch_size: int = 32,
    allowed: Mapping[str, Sequence[str]] | None = None,
    map_batches=None,
) -> dict[str, list]:
    """Label columns aligned with ``texts``; values become text cells verbatim."""
    texts = list(texts)
    width = len(columns)
    out: dict[str, list] = {c: [] for c in columns}
    if not texts:
        return out
    batches = [texts[i : i + batch_size] for i in range(0, len(texts), batch_size)]
    runner = map_batches or (lambda fn, items: [fn(b) for b in items])
    for batch, rows in zip(batches, runner(lambda b: backend.classify(b, width), batches)):
        if len(rows) != len(batch):
            raise ProtocolError(f"classifier returned {len(rows)} labels for {len(batch)} texts")
        for row in rows:
            if len(row) != width:
                raise ProtocolError(f"classifier returned {len(row)} labels per text, expected {width}")
            for col, value in zip(columns, row):
                out[col].append(as_text_cell(value))
    if allowed:
        for col, values in allowed.items():
            bad = {v for v in out.get(col, []) if v is not None and v not in values}
            if bad:
                raise ProtocolError(f"column {col!r} got labels {sorted(bad)} outside {list(values)}")
    return out


class ExternalClassifier(Component):
    """Wrap any remote or subprocess classifier as a pipeline component.

    ``endpoint`` selects the transport, e.g. ``{"transport": "http", "url": ...}``
    or ``{"transport": "subprocess", "command": [...]}``.
    """

    secret_fields = frozenset({"api_key"})

    def __init__(
        self,
        backend: ClassifierBackend | None = None,
        columns: Sequence[str] | None = None,
        name: str | None = None,
        text_column: str = "text",
        batch_size: int = 32,
        preset: str | None = None,
        endpoint: Mapping[str, Any] | None = None,
        api_key: str | None = None,
    ):
        if preset is not None:
            if preset not in PRESETS:
                raise ValueError(f"unknown classifier preset {preset!r}; known: {sorted(PRESETS)}")
            columns = columns or PRESETS[preset]["columns"]
            self.allowed = PRESETS[preset]["allowed"]
        else:
            self.allowed = None
        if not columns:
            raise ValueError("ExternalClassifier needs output columns or a preset")
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.backend = backend
        self.columns = list(columns)
        self.preset = preset
        self.name = name or preset or "classifier"
        self.text_column = text_column
        self.batch_size = batch_size
        self.endpoint = dict(endpoint or {})
        self.api_key = api_key

    def inputs(self):
        return [self.text_column]

    def outputs(self):
        return list(self.columns)

    def infer(self, data: Frame):
        if self.backend is None:
            raise RuntimeError(f"classifier {self.name!r} has no backend configured")
        return classify_external(
            data[self.text_column], self.backend, self.columns, self.batch_size, self.allowed, self.context.map_batches
        )

    def config(self):
        cfg = {
            "columns": self.columns,
            "name": self.name,
            "text_column": self.text_column,
            "batch_size": self.batch_size,
            "preset": self.preset,
            "endpoint": self.endpoint,
        }
        if self.api_key is not None:
            cfg["api_key"] = self.api_key
        return cfg

    @classmethod
    def from_config(cls, config, services=None):
        cfg = {k: v for k, v in config.items() if not (k == "api_key" and v == "<redacted>")}
        comp = cls(**cfg)
        if services is not None:
            comp.backend = services.classifier_backend(comp)
        return comp


class DemographicsClassifier(ExternalClassifier):
    """External classifier preset emitting gender, age_group and is_org."""

    provides = tuple(PRESETS["demographics"]["columns"])

    def __init__(self, backend: ClassifierBackend | None = None, **kwargs):
        kwargs.setdefault("preset", "demographics")
        super().__init__(backend, **kwargs)
