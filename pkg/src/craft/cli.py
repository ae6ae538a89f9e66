"""Command-line entry points for single stages and end-to-end runs.

Exit codes: 0 success, 2 validation error, 3 backend error, 4 missing
stage prerequisite.
"""

from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path

import click

from .config import load_config, parse_override
from .errors import BackendError, ConfigError, CraftError, InvalidInputError, PrerequisiteError
from .evaluate import format_table
from .pipeline import Pipeline

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_PREREQUISITE = 4


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, (ConfigError, InvalidInputError)):
        return EXIT_VALIDATION
    if isinstance(exc, PrerequisiteError):
        return EXIT_PREREQUISITE
    if isinstance(exc, BackendError):
        return EXIT_BACKEND
    return 1


def common_options(fn):
    @click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="Config file (YAML or JSON).")
    @click.option("--cache-dir", type=click.Path(path_type=Path), default=None, help="Cache root; overrides the config value.")
    @click.option("--queries", type=click.Path(path_type=Path), default=None, help="Persona-query manifest; overrides the config value.")
    @click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE", help="Dotted config override, e.g. critic.max-rounds=2.")
    @click.option("--backend-mode", type=click.Choice(["mock", "remote"]), default=None, help="Select mock or remote backends.")
    @click.option("--verbose", is_flag=True, default=False, help="Log stage progress.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)

    return wrapper


def _build_pipeline(config_path, cache_dir, queries, overrides, backend_mode, verbose) -> Pipeline:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    merged = {}
    for spec in overrides:
        key, value = parse_override(spec)
        merged[key] = value
    if cache_dir is not None:
        merged["cache_dir"] = str(cache_dir)
    if queries is not None:
        merged["queries"] = str(queries)
    if backend_mode is not None:
        merged["backend_mode"] = backend_mode
    config = load_config(config_path, merged)
    return Pipeline(config)


def _run_guarded(action):
    try:
        return action()
    except CraftError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_code_for(exc))
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


@click.group()
def main():
    """Claim-centric multi-video report generation pipeline."""


def _stage_command(stage_name: str, help_text: str):
    @main.command(name=stage_name, help=help_text)
    @common_options
    def cmd(config_path, cache_dir, queries, overrides, backend_mode, verbose):
        def action():
            pipeline = _build_pipeline(config_path, cache_dir, queries, overrides, backend_mode, verbose)
            stats = pipeline.run_stage(stage_name)
            click.echo(f"{stage_name}: {stats.inputs} inputs, {stats.outputs} new outputs ({stats.duration_s:.2f}s)")

        _run_guarded(action)

    return cmd


_stage_command("ingest", "Chunk videos and build frame-candidate manifests.")
_stage_command("transcribe", "Transcribe and translate videos (cached per video).")
_stage_command("dks", "Select query-conditioned keyframe clips.")
_stage_command("extract", "Extract and critic-refine atomic claims per (query, video).")
_stage_command("consolidate", "Pool, rerank, and consolidate claims into the submission file.")


@main.command(help="Run all stages in order and write the submission file.")
@common_options
def run(config_path, cache_dir, queries, overrides, backend_mode, verbose):
    def action():
        pipeline = _build_pipeline(config_path, cache_dir, queries, overrides, backend_mode, verbose)
        manifest = pipeline.run_all()
        click.echo(f"submission: {pipeline.output_path}")
        click.echo(f"manifest: {pipeline.cache_root / 'run_manifest.json'}")
        total = sum(manifest.backend_calls.values())
        click.echo(f"backend calls: {total}")

    _run_guarded(action)


@main.command(help="Score a submission against gold references.")
@common_options
@click.option("--references", "references_path", type=click.Path(path_type=Path), required=True, help="Gold references JSONL.")
@click.option("--submission", "submission_path", type=click.Path(path_type=Path), default=None, help="Submission JSONL (defaults to config output).")
def evaluate(config_path, cache_dir, queries, overrides, backend_mode, verbose, references_path, submission_path):
    def action():
        pipeline = _build_pipeline(config_path, cache_dir, queries, overrides, backend_mode, verbose)
        evaluation = pipeline.evaluate(references_path, submission_path)
        click.echo(format_table(evaluation))
        click.echo(f"metrics: {pipeline.cache_root / 'metrics.json'}")

    _run_guarded(action)


if __name__ == "__main__":
    main()
