"""Command-line front end: ``tdenrich validate | run | resume | anonymize | explain``.

Runs are described by a TOML file::

    seed = 42
    mode = "fixtures"
    fixtures = "fixtures"          # fixture directory, relative to this file
    workdir = "run"

    [input]
    path = "tweets.csv"

    [[components]]
    kind = "Rehydrate"

    [[components]]
    kind = "GeoNamesDecoder"

    [[components]]
    kind = "SentimentClassifier"

    [privacy]                      # optional terminal anonymization stage
    swap_columns = ["sentiment"]

Instead of ``[[components]]`` a config may point ``pipeline`` at a manifest
written by an earlier run. Exit codes: 0 ok, 2 validation or checkpoint
mismatch, 3 configuration, 4 component failure, 5 I/O.
"""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .engine import Component, Pipeline, validate_chain
from .errors import (
    CheckpointMismatch,
    CheckpointWriteFailure,
    ComponentFailure,
    IoError,
    NoCheckpoint,
    PipelineValidationError,
    PolicyError,
    SchemaError,
    TDError,
    TypeMismatch,
    UnknownColumn,
    UnknownKind,
    VersionIncompatible,
)
from .frame import Frame
from .frame_io import read_frame, write_frame
from .persistence.checkpoints import CheckpointStore
from .persistence.manifest import MANIFEST_FILENAME, parse_manifest, rebuild_from_manifest, write_manifest
from .privacy import Anonymizer, PrivacyPolicy, anonymize, load_or_create_salt
from .registry import MODES, Services, build_component
from .transforms import Lexicon, TopicSpec, read_terms

logger = logging.getLogger("tdenrich")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4
EXIT_IO = 5

DEFAULT_WORKDIR = "td-run"
DEFAULT_INITIAL_COLUMNS = ("tweet_id",)


class ConfigError(TDError):
    pass


@dataclass
class RunConfig:
    path: Path | None
    input_path: Path | None = None
    input_format: str | None = None
    output_format: str | None = None
    workdir: Path = Path(DEFAULT_WORKDIR)
    components: list[dict] = field(default_factory=list)
    manifest_path: Path | None = None
    seed: int | None = None
    privacy: dict | None = None
    policy_path: Path | None = None
    persist_salt: Path | None = None
    mode: str = "live"
    fixture_dir: Path | None = None
    max_workers: int = 4


def _toml_loads(text: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    return tomllib.loads(text)


def _expect(value, kind: type, what: str):
    # bool is an int subclass; never accept it where a number is wanted
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{what} must be a {kind.__name__}, got {type(value).__name__}")
    return value


def load_config(path: str | os.PathLike) -> RunConfig:
    """Parse a TOML run configuration; relative paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = _toml_loads(text)
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed TOML: {exc}") from exc
    return config_from_mapping(data, path.parent, path)


def config_from_mapping(data: dict, base: Path, path: Path | None = None) -> RunConfig:
    known = {"seed", "mode", "fixtures", "workdir", "input", "output", "components", "pipeline", "privacy", "max_workers"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    def rel(p) -> Path:
        p = Path(_expect(p, str, "path"))
        return p if p.is_absolute() else base / p

    cfg = RunConfig(path=path)
    inp = _expect(data.get("input", {}), dict, "[input]")
    if "path" in inp:
        cfg.input_path = rel(inp["path"])
    cfg.input_format = inp.get("format")
    cfg.output_format = _expect(data.get("output", {}), dict, "[output]").get("format")
    for fmt in (cfg.input_format, cfg.output_format):
        if fmt not in (None, "csv", "jsonl"):
            raise ConfigError(f"unknown frame format {fmt!r}; use 'csv' or 'jsonl'")
    if "workdir" in data:
        cfg.workdir = rel(data["workdir"])
    if "seed" in data:
        cfg.seed = _expect(data["seed"], int, "seed")
    cfg.mode = data.get("mode", "live")
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
    if "fixtures" in data:
        cfg.fixture_dir = rel(data["fixtures"])
    cfg.max_workers = _expect(data.get("max_workers", 4), int, "max_workers")
    components = _expect(data.get("components", []), list, "components")
    if "pipeline" in data:
        if components:
            raise ConfigError("give either 'pipeline' (a manifest) or [[components]], not both")
        cfg.manifest_path = rel(data["pipeline"])
    for i, entry in enumerate(components):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ConfigError(f"components[{i}] needs a 'kind'")
        cfg.components.append(_resolve_component_files(dict(entry), rel))
    if "privacy" in data:
        privacy = dict(_expect(data["privacy"], dict, "[privacy]"))
        if "persist_salt" in privacy:
            cfg.persist_salt = rel(privacy.pop("persist_salt"))
        if "policy" in privacy:
            cfg.policy_path = rel(privacy.pop("policy"))
        cfg.privacy = privacy
    return cfg


def _resolve_component_files(entry: dict, rel) -> dict:
    # file-valued conveniences become inline config so the manifest is self-contained
    try:
        if "positive_file" in entry or "negative_file" in entry:
            default = Lexicon.default()
            pos = read_terms(rel(entry.pop("positive_file"))) if "positive_file" in entry else default.positive
            neg = read_terms(rel(entry.pop("negative_file"))) if "negative_file" in entry else default.negative
            lex = Lexicon(pos, neg)
            entry["positive"], entry["negative"] = sorted(lex.positive), sorted(lex.negative)
        if "topics_file" in entry:
            entry["topics"] = TopicSpec.from_file(rel(entry.pop("topics_file"))).to_list()
    except (OSError, ValueError) as exc:
        raise ConfigError(f"component {entry.get('kind')!r}: {exc}") from exc
    return entry


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _privacy_policy(cfg: RunConfig, strict: bool, salt: bytes | None) -> PrivacyPolicy | None:
    if cfg.privacy is None and cfg.policy_path is None:
        return None
    try:
        if cfg.policy_path is not None:
            policy = PrivacyPolicy.from_file(cfg.policy_path, salt)
        else:
            policy = PrivacyPolicy.from_mapping(cfg.privacy or {}, salt)
    except OSError as exc:
        raise ConfigError(f"cannot read privacy policy: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid privacy policy: {exc}") from exc
    if strict:
        policy.strict = True
    return policy


def _salt(cfg: RunConfig) -> bytes | None:
    return load_or_create_salt(cfg.persist_salt) if cfg.persist_salt is not None else None


def build_components(cfg: RunConfig, services: Services | None, strict: bool = False) -> list[Component]:
    """Instantiate the configured components without checking the chain."""
    salt = _salt(cfg)
    if cfg.manifest_path is not None:
        try:
            manifest = parse_manifest(Path(cfg.manifest_path).read_bytes())
        except OSError as exc:
            raise ConfigError(f"cannot read manifest: {exc}") from exc
        if services is not None:
            services.salt = salt
        return rebuild_from_manifest(manifest, services=services).components
    components = []
    for i, entry in enumerate(cfg.components):
        entry = dict(entry)
        kind = entry.pop("kind")
        try:
            components.append(build_component(kind, entry, services))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"components[{i}] ({kind}): {exc}") from exc
    policy = _privacy_policy(cfg, strict, salt)
    if policy is not None:
        components.append(Anonymizer(policy))
    return components


def manifest_seed(cfg: RunConfig) -> int | None:
    if cfg.manifest_path is None:
        return None
    try:
        return parse_manifest(Path(cfg.manifest_path).read_bytes()).seed
    except OSError as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from exc


def make_services(cfg: RunConfig) -> Services:
    try:
        return Services(
            mode=cfg.mode,
            fixture_dir=cfg.fixture_dir,
            cache_dir=Path(cfg.workdir) / "cache",
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _initial_columns(cfg: RunConfig) -> tuple[str, ...]:
    if cfg.input_path is not None and Path(cfg.input_path).exists():
        return read_input(cfg).column_names
    return DEFAULT_INITIAL_COLUMNS


def read_input(cfg: RunConfig) -> Frame:
    if cfg.input_path is None:
        raise ConfigError("config has no [input] path")
    try:
        return read_frame(cfg.input_path, cfg.input_format)
    except ValueError as exc:
        if isinstance(exc, TDError):
            raise
        raise ConfigError(str(exc)) from exc


def build_pipeline(cfg: RunConfig, services: Services, initial_columns, seed: int, strict: bool = False) -> Pipeline:
    pipeline = Pipeline(initial_columns=initial_columns, seed=seed, max_workers=cfg.max_workers)
    for component in build_components(cfg, services, strict):
        pipeline.add_component(component)
    return pipeline


def _output_path(cfg: RunConfig) -> Path:
    fmt = cfg.output_format or cfg.input_format
    if fmt is None and cfg.input_path is not None:
        fmt = "jsonl" if Path(cfg.input_path).suffix.lower() in (".jsonl", ".ndjson") else "csv"
    return Path(cfg.workdir) / f"out.{fmt or 'csv'}"


def _write_outputs(cfg: RunConfig, pipeline: Pipeline, out: Frame) -> Path:
    target = _output_path(cfg)
    write_frame(out, target)
    manifest = write_manifest(pipeline)
    try:
        (Path(cfg.workdir) / MANIFEST_FILENAME).write_bytes(manifest)
    except OSError as exc:
        raise IoError(f"cannot write manifest: {exc}") from exc
    return target


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "workdir", None):
        cfg.workdir = Path(args.workdir)
    if getattr(args, "mode", None):
        cfg.mode = args.mode
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _load(args) -> RunConfig:
    return _apply_overrides(load_config(args.config), args)


def _report(cfg: RunConfig, args) -> int:
    components = build_components(cfg, None, args.strict)
    report = validate_chain([c.describe() for c in components], _initial_columns(cfg))
    print(report.format())
    for err in report.errors():
        print(f"error: {err}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_validate(args) -> int:
    code = _report(_load(args), args)
    print("pipeline is valid" if code == EXIT_OK else "pipeline is invalid")
    return code


def cmd_explain(args) -> int:
    return _report(_load(args), args)


def _seed(cfg: RunConfig) -> int:
    if cfg.seed is not None:
        return cfg.seed
    from_manifest = manifest_seed(cfg)
    return from_manifest if from_manifest is not None else secrets.randbits(63)


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.explain:
        return _report(cfg, args)
    frame = read_input(cfg)
    seed = _seed(cfg)
    print(f"seed: {seed}", file=sys.stderr)
    pipeline = build_pipeline(cfg, make_services(cfg), frame.column_names, seed, args.strict)
    out = pipeline.run(frame, cfg.workdir)
    target = _write_outputs(cfg, pipeline, out)
    print(f"wrote {out.num_rows} rows x {len(out.column_names)} columns to {target}")
    return EXIT_OK


def cmd_resume(args) -> int:
    cfg = _load(args)
    metas = CheckpointStore(cfg.workdir).metas()
    seed = cfg.seed
    if seed is None and 0 in metas:
        seed = metas[0].get("seed")
    if seed is None:
        seed = _seed(cfg)
    print(f"seed: {seed}", file=sys.stderr)
    frame = read_input(cfg) if cfg.input_path is not None and Path(cfg.input_path).exists() else None
    if 0 in metas:
        initial = tuple(name for name, _ in metas[0]["schema"]["columns"])
    elif frame is not None:
        initial = frame.column_names
    else:
        initial = DEFAULT_INITIAL_COLUMNS
    pipeline = build_pipeline(cfg, make_services(cfg), initial, seed, args.strict)
    out = pipeline.resume(cfg.workdir, frame, allow_fresh=args.allow_fresh, discard_stale=args.discard_stale)
    executed = pipeline.last_run.executed if pipeline.last_run else []
    target = _write_outputs(cfg, pipeline, out)
    print(f"resumed: recomputed {len(executed)} of {len(pipeline)} components")
    print(f"wrote {out.num_rows} rows x {len(out.column_names)} columns to {target}")
    return EXIT_OK


def cmd_anonymize(args) -> int:
    salt = load_or_create_salt(args.persist_salt) if args.persist_salt else None
    try:
        if args.policy:
            policy = PrivacyPolicy.from_file(args.policy, salt)
        else:
            policy = PrivacyPolicy() if salt is None else PrivacyPolicy(secret_salt=salt, salt_persisted=True)
    except OSError as exc:
        raise ConfigError(f"cannot read privacy policy: {exc}") from exc
    if args.strict:
        policy.strict = True
    if args.swap_fraction is not None:
        policy.swap_fraction = args.swap_fraction
        policy.__post_init__()
    frame = read_frame(args.input, args.format)
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    print(f"seed: {seed}", file=sys.stderr)
    out, summary = anonymize(frame, policy, seed)
    output = Path(args.output) if args.output else _anon_path(Path(args.input))
    write_frame(out, output, args.format)
    print(summary.format())
    print(f"salt: {'persisted in ' + str(args.persist_salt) if args.persist_salt else 'ephemeral (discarded)'}")
    print(f"wrote {out.num_rows} rows to {output}")
    return EXIT_OK


def _anon_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}.anon{path.suffix}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--workdir", default=default, help="working directory for checkpoints, cache and outputs")
    parser.add_argument("--seed", type=int, default=default, help="seed for all randomized steps")
    parser.add_argument("--mode", choices=MODES, default=default, help="talk to live services or replay fixtures")
    parser.add_argument(
        "--strict",
        action="store_true",
        default=argparse.SUPPRESS if suppress else False,
        help="fail when privacy policy columns are missing",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=argparse.SUPPRESS if suppress else 0,
        help="log progress (repeat for debug output)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdenrich", description="Enrich and anonymize tweet datasets.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, description=help)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = command("validate", cmd_validate, "check that every component's inputs are satisfied")
    p.add_argument("config", help="TOML run configuration")

    p = command("explain", cmd_explain, "print which component supplies every column")
    p.add_argument("config", help="TOML run configuration")

    p = command("run", cmd_run, "run the pipeline from scratch")
    p.add_argument("config", help="TOML run configuration")
    p.add_argument("--explain", action="store_true", help="print the column flow and exit without running")

    p = command("resume", cmd_resume, "continue an interrupted run from its checkpoints")
    p.add_argument("config", help="TOML run configuration")
    p.add_argument("--allow-fresh", action="store_true", help="start a fresh run when no checkpoints exist")
    p.add_argument(
        "--discard-stale",
        action="store_true",
        help="recompute from the first checkpoint that no longer matches the pipeline",
    )

    p = command("anonymize", cmd_anonymize, "drop, hash and swap columns of an enriched frame")
    p.add_argument("input", help="input frame (.csv or .jsonl)")
    p.add_argument("-o", "--output", help="output path (default: <input>.anon.<ext>)")
    p.add_argument("--policy", help="privacy policy file (.json or .toml)")
    p.add_argument("--persist-salt", metavar="PATH", help="read the hashing salt from PATH, creating it if absent")
    p.add_argument("--swap-fraction", type=float, help="override the policy's swap fraction")
    p.add_argument("--format", choices=("csv", "jsonl"), help="frame format (default: from the file suffix)")
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (PipelineValidationError, CheckpointMismatch, NoCheckpoint, UnknownColumn, TypeMismatch)):
        return EXIT_VALIDATION
    if isinstance(exc, (ConfigError, SchemaError, UnknownKind, PolicyError, VersionIncompatible)):
        return EXIT_CONFIG
    if isinstance(exc, ComponentFailure):
        return EXIT_RUNTIME
    if isinstance(exc, (IoError, CheckpointWriteFailure, OSError)):
        return EXIT_IO
    return EXIT_RUNTIME


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted; run 'tdenrich resume' to continue", file=sys.stderr)
        return 130
    except (TDError, OSError) as exc:
        code = exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, NoCheckpoint):
            print("hint: pass --allow-fresh to start a new run", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
