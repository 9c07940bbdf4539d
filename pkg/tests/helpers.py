"""Small components and oracles shared by the test modules."""

from __future__ import annotations

import functools
from typing import Callable, Sequence

from tdenrich.engine import Component
from tdenrich.frame import Frame


class Stage(Component):
    """Component with arbitrary declared columns; each output is ``fn`` of the inputs."""

    def __init__(
        self,
        inputs: Sequence[str],
        outputs: Sequence[str],
        fn: Callable[..., object] | None = None,
        name: str = "Stage",
        tag: str = "",
        null_skip: bool = True,
    ):
        self._inputs = list(inputs)
        self._outputs = list(outputs)
        self.fn = fn or (lambda *cells: "|".join(map(str, cells)))
        self.name = name
        self.tag = tag
        self.null_skip = null_skip
        self.calls = 0
        self.rows_seen: list[int] = []

    def kind_name(self) -> str:  # instance-level kinds keep test chains readable
        return self.name

    def inputs(self):
        return list(self._inputs)

    def outputs(self):
        return list(self._outputs)

    def infer(self, data: Frame):
        self.calls += 1
        self.rows_seen.append(data.num_rows)
        cols = [data[c] for c in self._inputs]
        rows = list(zip(*cols)) if cols else [()] * data.num_rows
        return {out: [self.fn(*row) for row in rows] for out in self._outputs}

    def config(self):
        return {"inputs": self._inputs, "outputs": self._outputs, "tag": self.tag}


class Failing(Stage):
    def infer(self, data: Frame):
        self.calls += 1
        raise RuntimeError("backend exploded")


def reachable_accepts(initial: set[str], chain: Sequence[tuple[set[str], set[str]]]) -> list[bool]:
    """Brute-force oracle for incremental chain construction.

    Replays the chain one candidate at a time, tracking the set of columns
    reachable so far. A candidate is accepted iff every input is reachable and
    none of its outputs is already reachable; rejected candidates leave the
    state unchanged.
    """
    reachable = set(initial)
    decisions = []
    for inputs, outputs in chain:
        ok = all(col in reachable for col in inputs) and not any(col in reachable for col in outputs)
        decisions.append(ok)
        if ok:
            reachable = reachable | set(outputs)
    return decisions


def null_skip_oracle(frame: Frame, inputs: Sequence[str], outputs: Sequence[str], fn) -> dict[str, list]:
    """Filter non-null rows, apply ``fn`` row by row, re-align, fill null."""
    result = {out: [] for out in outputs}
    for i in range(frame.num_rows):
        cells = [frame[c][i] for c in inputs]
        for out in outputs:
            result[out].append(None if any(v is None for v in cells) else fn(*cells))
    return result


# acceptance criterion number -> (title, passed); printed by conftest at session end
ACCEPTANCE: dict[int, tuple[str, bool]] = {}


def criterion(number: int, title: str):
    """Record whether an acceptance test passed without altering its outcome."""

    def wrap(test):
        @functools.wraps(test)
        def run(*args, **kwargs):
            try:
                test(*args, **kwargs)
            except BaseException:
                ACCEPTANCE[number] = (title, False)
                raise
            ACCEPTANCE[number] = (title, True)

        return run

    return wrap
