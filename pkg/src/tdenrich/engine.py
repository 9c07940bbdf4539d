"""Pipeline orchestration.

A :class:`Pipeline` is a linear chain of :class:`Component` objects. Each
component declares the columns it needs (``inputs``) and the columns it adds
(``outputs``); the chain is checked when a component is added and again before
every run. Runs checkpoint the frame after every component so that an
interrupted run can be resumed.

Example::

    pipe = Pipeline(initial_columns=["tweet_id"], seed=7)
    pipe.add_component(Hydrator(backend))
    pipe.add_component(Geocoder(backend))
    pipe.add_component(SentimentClassifier(lexicon))
    enriched = pipe.run(data, workdir="run1")
"""

from __future__ import annotations

import abc
import functools
import logging
import os
import secrets
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, ClassVar, Iterable, Mapping, Sequence

import numpy as np

from .canonical import digest
from .errors import (
    CheckpointMismatch,
    CheckpointWriteFailure,
    ComponentFailure,
    NoCheckpoint,
    OutputCollision,
    PipelineValidationError,
    TerminalStageError,
    UnsatisfiedInput,
)
from .frame import Column, Frame, non_null_positions
from .persistence.checkpoints import CheckpointStore, WorkdirLock

logger = logging.getLogger(__name__)

INITIAL = "<input>"
REDACTED = "<redacted>"


# ---------------------------------------------------------------------------
# run context
# ---------------------------------------------------------------------------


@dataclass
class RunContext:
    """Per-invocation services the engine hands to a component."""

    seed: int = 0
    position: int = 0
    workdir: Path | None = None
    max_workers: int = 4
    _rng: np.random.Generator | None = field(default=None, repr=False)

    @property
    def rng(self) -> np.random.Generator:
        # counter-based stream keyed by (seed, position): resuming at any
        # position draws exactly what an uninterrupted run would have drawn
        if self._rng is None:
            self._rng = make_rng(self.seed, self.position)
        return self._rng

    def map_batches(self, fn: Callable[[Any], Any], batches: Sequence[Any], max_workers: int | None = None) -> list:
        """Apply ``fn`` to every batch, possibly in parallel; results keep input order."""
        workers = max(1, min(max_workers or self.max_workers, len(batches)))
        if workers == 1:
            return [fn(b) for b in batches]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, batches))


def make_rng(seed: int, position: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(position)])))


# ---------------------------------------------------------------------------
# components
# ---------------------------------------------------------------------------


def redact_config(config: Mapping[str, Any], secret_fields: Iterable[str]) -> dict:
    secret_fields = set(secret_fields)
    return {k: (REDACTED if k in secret_fields else v) for k, v in config.items()}


def config_digest(config: Mapping[str, Any], secret_fields: Iterable[str] = ()) -> str:
    """Digest of a configuration with secret keys left out entirely."""
    secret_fields = set(secret_fields)
    return digest({k: v for k, v in config.items() if k not in secret_fields})


@dataclass(frozen=True)
class ComponentDescriptor:
    kind: str
    version: str
    config_digest: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    null_skip: bool = True
    terminal: bool = False

    def __post_init__(self):
        if not self.terminal:
            if not self.outputs:
                raise ValueError(f"component {self.kind!r} declares no outputs")
            overlap = set(self.inputs) & set(self.outputs)
            if overlap:
                raise ValueError(f"component {self.kind!r} lists {sorted(overlap)} as both input and output")

    @property
    def identity(self) -> tuple[str, str, str]:
        return (self.kind, self.version, self.config_digest)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "version": self.version,
            "config_digest": self.config_digest,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "null_skip": self.null_skip,
            "terminal": self.terminal,
        }


class Component(abc.ABC):
    """A black-box pipeline stage.

    Subclasses implement :meth:`inputs`, :meth:`outputs` and :meth:`infer`.
    ``infer`` receives a frame and returns a mapping from each output column
    name to a sequence of cells aligned with the frame's rows. With
    ``null_skip`` enabled (the default) the engine only passes rows whose
    inputs are all non-null and fills the remaining rows with null.
    """

    kind: ClassVar[str | None] = None
    version: ClassVar[str] = "1.0.0"
    null_skip: ClassVar[bool] = True
    terminal: ClassVar[bool] = False
    secret_fields: ClassVar[frozenset[str]] = frozenset()
    # columns this kind typically produces; used for error hints only
    provides: ClassVar[tuple[str, ...]] = ()

    _context: RunContext | None = None

    @abc.abstractmethod
    def inputs(self) -> list[str]: ...

    @abc.abstractmethod
    def outputs(self) -> list[str]: ...

    @abc.abstractmethod
    def infer(self, data: Frame) -> Mapping[str, Sequence[Any]]: ...

    def config(self) -> dict:
        """JSON-serializable configuration; keys in ``secret_fields`` are redacted."""
        return {}

    @classmethod
    def from_config(cls, config: Mapping[str, Any], services=None) -> Component:
        return cls(**config)

    @classmethod
    def kind_name(cls) -> str:
        return cls.kind or cls.__name__

    @property
    def context(self) -> RunContext:
        if self._context is None:
            self._context = RunContext()
        return self._context

    def bind(self, context: RunContext) -> None:
        self._context = context

    def describe(self) -> ComponentDescriptor:
        return ComponentDescriptor(
            kind=self.kind_name(),
            version=self.version,
            config_digest=config_digest(self.config(), self.secret_fields),
            inputs=tuple(self.inputs()),
            outputs=tuple(self.outputs()),
            null_skip=self.null_skip,
            terminal=self.terminal,
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}(in={self.inputs()}, out={self.outputs()})"


class TerminalStage(Component):
    """A final stage that rewrites the frame instead of adding columns.

    Only privacy transforms use this. Nothing may be scheduled after it.
    """

    terminal = True
    null_skip = False

    def outputs(self) -> list[str]:
        return []

    def infer(self, data: Frame):
        raise TypeError(f"{type(self).__name__} is applied with apply(), not infer()")

    @abc.abstractmethod
    def apply(self, frame: Frame) -> Frame: ...


def _realign(result: Mapping[str, Sequence], positions: Sequence[int], n: int) -> dict[str, list]:
    full = {}
    for name, values in result.items():
        col = [None] * n
        for value, pos in zip(values, positions):
            col[pos] = value
        full[name] = col
    return full


def _check_result(result, expected: Sequence[str], rows: int, kind: str) -> dict[str, list]:
    if not isinstance(result, Mapping):
        raise TypeError(f"{kind}.infer returned {type(result).__name__}, expected a mapping of columns")
    if set(result) != set(expected):
        raise ValueError(f"{kind}.infer returned columns {sorted(result)}, declared outputs are {sorted(expected)}")
    checked = {}
    for name in expected:
        values = list(result[name])
        if len(values) != rows:
            raise ValueError(f"{kind}.infer returned {len(values)} cells for {name!r}, expected {rows}")
        checked[name] = values
    return checked


def not_null(*columns: str):
    """Decorate ``infer`` so rows with a null in any of ``columns`` are skipped.

    Skipped rows get null in every returned column; the rest of the frame is
    returned aligned with the input.
    """

    def decorator(infer):
        @functools.wraps(infer)
        def wrapper(self, data: Frame, *args, **kwargs):
            positions = non_null_positions(data, columns)
            if len(positions) == data.num_rows:
                return infer(self, data, *args, **kwargs)
            if not positions:
                return {name: [None] * data.num_rows for name in self.outputs()}
            result = infer(self, data.take(positions), *args, **kwargs)
            return _realign(result, positions, data.num_rows)

        wrapper.__not_null__ = columns
        return wrapper

    return decorator


def apply_component(component: Component, frame: Frame, context: RunContext | None = None) -> Frame:
    """Run one component over ``frame`` and return the enriched frame."""
    if context is not None:
        component.bind(context)
    kind = component.kind_name()
    if component.terminal:
        out = component.apply(frame)
        if out.row_ids != frame.row_ids:
            raise ValueError(f"{kind} changed the frame's rows")
        return out
    outputs = list(component.outputs())
    n = frame.num_rows
    if component.null_skip:
        positions = non_null_positions(frame, component.inputs())
        if not positions:
            result = {name: [None] * n for name in outputs}
        elif len(positions) == n:
            result = _check_result(component.infer(frame), outputs, n, kind)
        else:
            view = frame.take(positions)
            partial = _check_result(component.infer(view), outputs, len(positions), kind)
            result = _realign(partial, positions, n)
    else:
        result = _check_result(component.infer(frame), outputs, n, kind)
    for name in outputs:
        frame = frame.add_column(Column(name, result[name]))
    return frame


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class ComponentResolution:
    position: int
    kind: str
    providers: dict[str, str | None]
    outputs: tuple[str, ...]
    collisions: dict[str, str] = field(default_factory=dict)
    after_terminal: str | None = None

    @property
    def missing(self) -> list[str]:
        return [col for col, provider in self.providers.items() if provider is None]

    @property
    def ok(self) -> bool:
        return not self.missing and not self.collisions and self.after_terminal is None


@dataclass
class ValidationReport:
    initial_columns: tuple[str, ...]
    entries: list[ComponentResolution]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def errors(self) -> list[PipelineValidationError]:
        errs: list[PipelineValidationError] = []
        for e in self.entries:
            if e.after_terminal is not None:
                errs.append(TerminalStageError(e.kind, e.after_terminal))
            if e.missing:
                errs.append(UnsatisfiedInput(e.kind, {c: supplier_hints(c) for c in e.missing}))
            if e.collisions:
                errs.append(OutputCollision(e.kind, list(e.collisions), e.collisions))
        return errs

    def raise_for_errors(self) -> None:
        errs = self.errors()
        if errs:
            raise errs[0]

    def format(self) -> str:
        lines = [f"initial columns: {', '.join(self.initial_columns) or '(none)'}"]
        for e in self.entries:
            status = "ok" if e.ok else "FAIL"
            lines.append(f"[{e.position}] {e.kind}: {status}")
            for col, provider in e.providers.items():
                lines.append(f"      in  {col:<24} <- {provider or 'MISSING'}")
            for col in e.outputs:
                note = f"  (collides with {e.collisions[col]})" if col in e.collisions else ""
                lines.append(f"      out {col}{note}")
            if e.after_terminal:
                lines.append(f"      scheduled after terminal stage {e.after_terminal}")
        return "\n".join(lines)


def supplier_hints(column: str) -> list[str]:
    """Registered component kinds known to produce ``column``."""
    from .registry import supplier_hints as hints

    return hints(column)


def validate_chain(descriptors: Sequence[ComponentDescriptor], initial_columns: Iterable[str]) -> ValidationReport:
    """Resolve every declared input against the initial columns and upstream outputs."""
    initial = tuple(initial_columns)
    available: dict[str, str] = {c: INITIAL for c in initial}
    terminal: str | None = None
    entries = []
    for pos, desc in enumerate(descriptors, start=1):
        label = f"{desc.kind}#{pos}"
        providers = {col: available.get(col) for col in desc.inputs}
        collisions = {col: available[col] for col in desc.outputs if col in available}
        entry = ComponentResolution(pos, desc.kind, providers, tuple(desc.outputs), collisions, terminal)
        entries.append(entry)
        for col in desc.outputs:
            available.setdefault(col, label)
        if desc.terminal and terminal is None:
            terminal = label
    return ValidationReport(initial, entries)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    initial_columns: tuple[str, ...]
    input_digest: str
    output_digest: str
    executed: list[int]


class Pipeline:
    """An ordered, validated chain of components."""

    def __init__(self, initial_columns: Iterable[str] = ("tweet_id",), seed: int | None = None, max_workers: int = 4):
        self.initial_columns = tuple(initial_columns)
        self.seed = int(seed) if seed is not None else secrets.randbits(64)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.max_workers = max_workers
        self.components: list[Component] = []
        self.last_run: RunRecord | None = None

    def __len__(self) -> int:
        return len(self.components)

    def descriptors(self) -> list[ComponentDescriptor]:
        return [c.describe() for c in self.components]

    def add_component(self, component: Component) -> Pipeline:
        """Append ``component`` if its inputs are satisfiable; raise otherwise."""
        candidate = self.descriptors() + [component.describe()]
        report = validate_chain(candidate, self.initial_columns)
        last = report.entries[-1]
        if not last.ok:
            ValidationReport(report.initial_columns, [last]).raise_for_errors()
        self.components.append(component)
        return self

    def validate(self, initial_columns: Iterable[str] | None = None) -> ValidationReport:
        cols = self.initial_columns if initial_columns is None else tuple(initial_columns)
        return validate_chain(self.descriptors(), cols)

    def explain(self, initial_columns: Iterable[str] | None = None) -> str:
        return self.validate(initial_columns).format()

    # -- execution ----------------------------------------------------------

    def _context(self, position: int, workdir: Path) -> RunContext:
        return RunContext(seed=self.seed, position=position, workdir=workdir, max_workers=self.max_workers)

    def _execute(self, frame: Frame, start: int, store: CheckpointStore) -> tuple[Frame, list[int]]:
        executed = []
        last_checkpoint = start
        for pos in range(start + 1, len(self.components) + 1):
            component = self.components[pos - 1]
            kind = component.kind_name()
            logger.info("running component %d/%d: %s", pos, len(self.components), kind)
            try:
                frame = apply_component(component, frame, self._context(pos, store.workdir))
            except Exception as exc:
                raise ComponentFailure(kind, pos, last_checkpoint, exc) from exc
            try:
                store.write(pos, kind, component.describe().to_dict(), frame, self.seed)
            except OSError as exc:
                raise CheckpointWriteFailure(f"could not write checkpoint {pos:03d} for {kind}: {exc}") from exc
            last_checkpoint = pos
            executed.append(pos)
        return frame, executed

    def run(self, frame: Frame, workdir: str | os.PathLike) -> Frame:
        """Run every component over ``frame``, checkpointing into ``workdir``."""
        self.validate(frame.column_names).raise_for_errors()
        store = CheckpointStore(workdir)
        with WorkdirLock(store):
            store.clear()
            try:
                store.write(0, "input", {"kind": "input"}, frame, self.seed)
            except OSError as exc:
                raise CheckpointWriteFailure(f"could not write input checkpoint: {exc}") from exc
            out, executed = self._execute(frame, 0, store)
        self.last_run = RunRecord(frame.column_names, frame.digest(), out.digest(), executed)
        return out

    def resume(
        self,
        workdir: str | os.PathLike,
        frame: Frame | None = None,
        *,
        allow_fresh: bool = False,
        discard_stale: bool = False,
    ) -> Frame:
        """Continue from the longest checkpoint prefix that matches this pipeline.

        A stored checkpoint whose (kind, version, config digest) differs from
        the component now at that position raises :class:`CheckpointMismatch`
        unless ``discard_stale`` is set, in which case it and everything after
        it are deleted and recomputed.
        """
        store = CheckpointStore(workdir)
        metas = store.metas()
        if 0 not in metas:
            if allow_fresh and frame is not None:
                logger.info("no checkpoints in %s, starting a fresh run", workdir)
                return self.run(frame, workdir)
            raise NoCheckpoint(f"no input checkpoint in {Path(workdir) / 'checkpoints'}")
        with WorkdirLock(store):
            input_meta = metas[0]
            if input_meta.get("seed") != self.seed:
                raise CheckpointMismatch(0, f"seed {self.seed}", f"seed {input_meta.get('seed')}", -1)
            if frame is not None and frame.digest() != input_meta["content_digest"]:
                raise CheckpointMismatch(0, "the given input frame", "a different input frame", -1)
            current = store.load(input_meta)
            if current is None:
                raise NoCheckpoint("input checkpoint is corrupt")
            self.validate(current.column_names).raise_for_errors()
            input_digest = current.digest()
            reached = 0
            for pos, component in enumerate(self.components, start=1):
                meta = metas.get(pos)
                if meta is None:
                    break
                want = component.describe()
                got = meta.get("descriptor", {})
                got_identity = (got.get("kind"), got.get("version"), got.get("config_digest"))
                if got_identity != want.identity:
                    if not discard_stale:
                        raise CheckpointMismatch(pos, want.identity, got_identity, reached)
                    logger.warning("discarding stale checkpoints from position %d", pos)
                    break
                loaded = store.load(meta)
                if loaded is None:
                    break
                current, reached = loaded, pos
            store.clear(reached + 1)
            logger.info("resuming after checkpoint %03d", reached)
            out, executed = self._execute(current, reached, store)
        initial = tuple(name for name, _ in input_meta["schema"]["columns"])
        self.last_run = RunRecord(initial, input_digest, out.digest(), executed)
        return out
