"""Command line entry point: ``ymh-lab run|validate|list-scenarios``."""
from __future__ import annotations

import json
import sys
from importlib import resources

import click

from .config import SCENARIO_HELP, ConfigError, load_config
from .runner import emit, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_STAGE = 0, 1, 2


@click.group()
def main() -> None:
    """Yang-Mills-Higgs neck laboratory."""


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory.")
def run(config: str, out_dir: str) -> None:
    """Run the experiment described by CONFIG and write its report."""
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        click.echo(f"invalid config: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    report = run_experiment(cfg)
    try:
        files = emit(report, out_dir)
    except OSError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_STAGE)
    for v in report.summary["verdicts"]:
        click.echo(f"{'PASS' if v['passed'] else 'FAIL'}  {v['name']}")
    click.echo(f"wrote {len(files)} files to {out_dir}")
    if report.failed:
        for e in report.summary["errors"]:
            click.echo(f"stage {e['stage']} member {e['member']}: {e['message']}", err=True)
        sys.exit(EXIT_STAGE)


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
def validate(config: str) -> None:
    """Check CONFIG without running it."""
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        click.echo(f"invalid config: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    click.echo(f"ok {cfg.scenario} {cfg.hash}")


@main.command("list-scenarios")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def list_scenarios(as_json: bool) -> None:
    """List scenario kinds and the example configs shipped with the package."""
    shipped = sorted(p.name for p in resources.files("ymh_lab").joinpath("scenarios").iterdir() if p.name.endswith(".json"))
    if as_json:
        click.echo(json.dumps({"scenarios": SCENARIO_HELP, "shipped": shipped}, sort_keys=True, indent=2))
        return
    for name, text in SCENARIO_HELP.items():
        click.echo(f"{name:22s} {text}")
    click.echo("")
    click.echo("shipped configs: " + ", ".join(shipped))


if __name__ == "__main__":
    main()
