"""Command line front end.

Exit codes: 0 the bundle was produced, 2 inputs were rejected at intake,
3 a stage gate failed, 4 the model provider gave out. Usage errors exit 1.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import CONFIG_FILENAME, PipelineConfig, load_config, with_mock_gateway
from .errors import PartiturError
from .model import STAGE_ORDER
from .pipeline import PipelineRunner


def _load_pipeline_config(work_dir: Path, config_path: Path | None) -> PipelineConfig:
    if config_path is not None:
        return load_config(config_path)
    local = work_dir / CONFIG_FILENAME
    return load_config(local) if local.is_file() else PipelineConfig()


def _make_runner(presentation_id: str, work_root: Path, config_path: Path | None,
                 mock: bool, resume: bool = False) -> PipelineRunner:
    work_dir = work_root / presentation_id
    config = _load_pipeline_config(work_dir, config_path)
    if mock:
        config = with_mock_gateway(config)
    return PipelineRunner(presentation_id, config, work_root=work_root,
                          use_mock=mock, resume=resume)


@click.group()
def main():
    """Turn a slide deck and its lecture recording into a publication bundle."""


@main.command("full-pipeline")
@click.argument("presentation_id")
@click.option("--work-root", type=click.Path(path_type=Path), default=Path("work"),
              show_default=True, help="Directory holding per-presentation inputs.")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None, help=f"Explicit {CONFIG_FILENAME} (default: the work dir's).")
@click.option("--mock", is_flag=True, help="Use the offline provider.")
@click.option("--resume", is_flag=True,
              help="Reuse artifacts from an earlier run when they still validate.")
def full_pipeline(presentation_id: str, work_root: Path, config_path: Path | None,
                  mock: bool, resume: bool):
    """Run all ten stages for PRESENTATION_ID."""
    try:
        runner = _make_runner(presentation_id, work_root, config_path, mock, resume)
        outcome = runner.full_pipeline()
    except PartiturError as exc:
        raise click.ClickException(str(exc)) from exc
    result = outcome.result
    if result.status == "COMPLETE":
        click.echo(f"{presentation_id}: COMPLETE ({runner.out_dir})")
    else:
        error = getattr(runner, "last_error", None)
        click.echo(f"{presentation_id}: FAILED at {result.failed_stage}"
                   + (f": {error}" if error else ""), err=True)
    sys.exit(outcome.exit_code)


@main.command("stage")
@click.argument("stage_name", type=click.Choice(STAGE_ORDER))
@click.argument("presentation_id")
@click.option("--work-root", type=click.Path(path_type=Path), default=Path("work"),
              show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--mock", is_flag=True, help="Use the offline provider.")
def stage(stage_name: str, presentation_id: str, work_root: Path,
          config_path: Path | None, mock: bool):
    """Run one stage, taking upstream artifacts from the previous run."""
    try:
        runner = _make_runner(presentation_id, work_root, config_path, mock)
        runner.run_stage(stage_name)
    except PartiturError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"{presentation_id}: {stage_name} ok")


@main.command("report")
@click.argument("presentation_id")
@click.option("--work-root", type=click.Path(path_type=Path), default=Path("work"),
              show_default=True)
def report(presentation_id: str, work_root: Path):
    """Show the last run's status, timings, and artifact digests."""
    runner = PipelineRunner(presentation_id, work_root=work_root)
    try:
        result, quality = runner.report()
    except PartiturError as exc:
        raise click.ClickException(str(exc)) from exc
    payload = result.to_dict()
    if quality is not None:
        payload["quality_metrics"] = quality.to_dict()
    click.echo(json.dumps(payload, indent=2, sort_keys=True))
    sys.exit(0 if result.status == "COMPLETE" else 1)


if __name__ == "__main__":
    main()
