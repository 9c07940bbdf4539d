"""Flow-based enrichment pipelines for tabular social-media datasets."""

__version__ = "0.1.0"

from .engine import Component, ComponentDescriptor, Pipeline, RunContext, TerminalStage, not_null  # noqa: E402
from .frame import Column, Frame, add_column, project_non_null  # noqa: E402
from .frame_io import read_frame, write_frame  # noqa: E402

__all__ = [
    "Column",
    "Component",
    "ComponentDescriptor",
    "Frame",
    "Pipeline",
    "RunContext",
    "TerminalStage",
    "__version__",
    "add_column",
    "not_null",
    "project_non_null",
    "read_frame",
    "write_frame",
]
