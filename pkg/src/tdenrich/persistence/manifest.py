"""Versioned, canonical JSON record of a pipeline run.

A manifest lists every component with its (secret-redacted) configuration,
the seed, and digests of the input and output frames. Serialization is
canonical (sorted keys, UTF-8, no insignificant whitespace), so identical
runs produce identical bytes and a rebuilt pipeline can be checked against
the recorded ``output_digest``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

from .. import __version__
from ..canonical import canonical_json
from ..engine import Component, Pipeline, redact_config
from ..errors import SchemaError, VersionIncompatible

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_FILENAME = "td.manifest.json"


class ComponentVersionWarning(UserWarning):
    pass


@dataclass
class ComponentEntry:
    kind: str
    version: str
    config: dict
    config_digest: str
    inputs: list[str]
    outputs: list[str]
    null_skip: bool
    terminal: bool = False

    @classmethod
    def from_component(cls, component: Component) -> ComponentEntry:
        desc = component.describe()
        return cls(
            kind=desc.kind,
            version=desc.version,
            config=redact_config(component.config(), component.secret_fields),
            config_digest=desc.config_digest,
            inputs=list(desc.inputs),
            outputs=list(desc.outputs),
            null_skip=desc.null_skip,
            terminal=desc.terminal,
        )


@dataclass
class PipelineManifest:
    seed: int
    initial_columns: list[str]
    components: list[ComponentEntry]
    privacy_policy: dict | None = None
    input_digest: str | None = None
    output_digest: str | None = None
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))
    engine_version: str = __version__
    manifest_version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PipelineManifest:
        data = dict(data)
        data["components"] = [ComponentEntry(**c) for c in data["components"]]
        return cls(**data)


def build_manifest(
    pipeline: Pipeline,
    *,
    input_digest: str | None = None,
    output_digest: str | None = None,
    initial_columns=None,
    created_at: str | None = None,
) -> PipelineManifest:
    """Describe ``pipeline``; digests default to its last run, if any."""
    run = pipeline.last_run
    if run is not None:
        input_digest = input_digest or run.input_digest
        output_digest = output_digest or run.output_digest
        initial_columns = initial_columns or run.initial_columns
    privacy = None
    for comp in pipeline.components:
        if comp.terminal:
            privacy = comp.config()
    manifest = PipelineManifest(
        seed=pipeline.seed,
        initial_columns=list(initial_columns or pipeline.initial_columns),
        components=[ComponentEntry.from_component(c) for c in pipeline.components],
        privacy_policy=privacy,
        input_digest=input_digest,
        output_digest=output_digest,
    )
    if created_at is not None:
        manifest.created_at = created_at
    return manifest


def dumps_manifest(manifest: PipelineManifest) -> bytes:
    return canonical_json(manifest.to_dict())


def write_manifest(pipeline: Pipeline, **run_metadata) -> bytes:
    return dumps_manifest(build_manifest(pipeline, **run_metadata))


@lru_cache(maxsize=1)
def manifest_schema() -> dict:
    text = (resources.files("tdenrich.persistence") / "schemas" / "manifest.schema.json").read_text("utf-8")
    return json.loads(text)


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def parse_manifest(data: bytes | str) -> PipelineManifest:
    import jsonschema

    try:
        obj = json.loads(data)
    except ValueError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("manifest must be a JSON object")
    version = obj.get("manifest_version")
    if version != MANIFEST_VERSION:
        raise SchemaError(f"unsupported manifest_version {version!r} (expected {MANIFEST_VERSION})", "/manifest_version")
    validator = jsonschema.Draft202012Validator(manifest_schema())
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaError(err.message, _pointer(err.absolute_path))
    return PipelineManifest.from_dict(obj)


def _semver(version: str) -> tuple[int, int, int]:
    core = version.split("-")[0].split("+")[0]
    major, minor, patch = (int(x) for x in core.split("."))
    return major, minor, patch


def rebuild_from_manifest(manifest: PipelineManifest, registry=None, services=None) -> Pipeline:
    """Reconstruct the pipeline a manifest describes.

    Secrets are not in the manifest; connectors pick them up from
    ``services``. A major version difference between the manifest and the
    registered component is an error, any other difference a warning.
    """
    from ..registry import build_component, default_registry

    registry = registry or default_registry()
    pipeline = Pipeline(initial_columns=manifest.initial_columns, seed=manifest.seed)
    for i, entry in enumerate(manifest.components):
        cls = registry.get(entry.kind)
        if cls is not None:
            have, want = _semver(cls.version), _semver(entry.version)
            if have[0] != want[0]:
                raise VersionIncompatible(
                    f"component {entry.kind!r}: manifest has version {entry.version}, registry provides {cls.version}"
                )
            if have != want:
                warnings.warn(
                    f"component {entry.kind!r}: manifest has version {entry.version}, using {cls.version}",
                    ComponentVersionWarning,
                    stacklevel=2,
                )
        config = {k: v for k, v in entry.config.items() if v != "<redacted>"}
        component = build_component(entry.kind, config, services, registry)
        digest_now = component.describe().config_digest
        if digest_now != entry.config_digest:
            warnings.warn(
                f"component {entry.kind!r} at /components/{i} rebuilt with a different config digest",
                ComponentVersionWarning,
                stacklevel=2,
            )
        pipeline.add_component(component)
    return pipeline
