"""Exception hierarchy shared by every tdenrich module."""

from __future__ import annotations


class TDError(Exception):
    """Base class for all tdenrich errors."""


# -- frame ------------------------------------------------------------------


class FrameError(TDError):
    pass


class DuplicateColumn(FrameError):
    def __init__(self, name: str):
        super().__init__(f"column {name!r} already present in frame")
        self.name = name


class LengthMismatch(FrameError):
    def __init__(self, name: str, expected: int, got: int):
        super().__init__(f"column {name!r} has {got} cells, frame has {expected} rows")
        self.name = name
        self.expected = expected
        self.got = got


class UnknownColumn(FrameError):
    def __init__(self, names, where: str = "frame"):
        if isinstance(names, str):
            names = [names]
        self.names = list(names)
        super().__init__(f"unknown column(s) {', '.join(map(repr, self.names))} in {where}")


class TypeMismatch(FrameError):
    pass


class ParseError(FrameError):
    def __init__(self, message: str, line: int, column: int | None = None, path=None):
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        prefix = f"{path}: " if path else ""
        super().__init__(f"{prefix}{where}: {message}")
        self.line = line
        self.column = column
        self.path = path


class IoError(TDError, OSError):
    pass


# -- engine -----------------------------------------------------------------


class PipelineValidationError(TDError):
    """Pipeline is not a sound chain of components."""


class UnsatisfiedInput(PipelineValidationError):
    def __init__(self, component: str, missing: dict[str, list[str]]):
        # missing maps column -> kinds that could supply it
        self.component = component
        self.missing = missing
        parts = []
        for col, hints in missing.items():
            hint = f" (could be supplied by: {', '.join(hints)})" if hints else ""
            parts.append(f"{col!r}{hint}")
        super().__init__(f"component {component!r} requires unavailable column(s): " + "; ".join(parts))


class OutputCollision(PipelineValidationError):
    def __init__(self, component: str, columns: list[str], owners: dict[str, str]):
        self.component = component
        self.columns = columns
        self.owners = owners
        detail = ", ".join(f"{c!r} (already produced by {owners[c]})" for c in columns)
        super().__init__(f"component {component!r} would overwrite {detail}")


class TerminalStageError(PipelineValidationError):
    def __init__(self, component: str, terminal: str):
        self.component = component
        self.terminal = terminal
        super().__init__(
            f"component {component!r} cannot be scheduled after terminal privacy stage {terminal!r}"
        )


class ComponentFailure(TDError):
    def __init__(self, kind: str, position: int, last_checkpoint: int | None, cause: BaseException):
        self.kind = kind
        self.position = position
        self.last_checkpoint = last_checkpoint
        self.cause = cause
        cp = "none" if last_checkpoint is None else f"#{last_checkpoint:03d}"
        super().__init__(
            f"component {kind!r} at position {position} failed: {type(cause).__name__}: {cause} "
            f"(last checkpoint: {cp})"
        )


class CheckpointWriteFailure(TDError):
    pass


class CheckpointMismatch(TDError):
    def __init__(self, position: int, expected, found, reusable: int):
        self.position = position
        self.expected = expected
        self.found = found
        self.reusable = reusable
        super().__init__(
            f"checkpoint at position {position} was produced by {found}, pipeline now has {expected}; "
            f"checkpoints 0..{reusable} are reusable"
        )


class NoCheckpoint(TDError):
    pass


# -- connectors -------------------------------------------------------------


class ConnectorError(TDError):
    pass


class AuthError(ConnectorError):
    pass


class TransportError(ConnectorError):
    pass


class QuotaExceeded(ConnectorError):
    pass


class FixtureMiss(ConnectorError):
    def __init__(self, kind: str, request, path):
        self.kind = kind
        self.request = request
        self.path = path
        super().__init__(f"no recorded {kind} response for {request!r} (expected {path})")


class ProtocolError(ConnectorError):
    pass


class SubprocessExitError(ConnectorError):
    def __init__(self, command, returncode: int, stderr: str):
        self.command = command
        self.returncode = returncode
        self.stderr = stderr
        super().__init__(f"classifier process {command!r} exited with {returncode}: {stderr.strip()[:500]}")


# -- privacy / persistence --------------------------------------------------


class PolicyError(TDError):
    pass


class SchemaError(TDError):
    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class UnknownKind(TDError):
    pass


class VersionIncompatible(TDError):
    pass
