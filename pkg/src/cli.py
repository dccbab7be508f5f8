# cli.py - Command Line Interface for the Fairness Audit
"""
fairness-audit synth | rank | audit | report

Exit codes: 0 success, 2 configuration or usage error, 3 dataset error,
4 any other runtime failure.
"""

import functools
import logging
import sys

import click

from config import settings
from src import __version__
from src.data_collection.dataset import DatasetError
from src.analysis.fairness.audit import (
    REPORT_FILE,
    ConfigError,
    load_config,
    load_report,
    run_audit,
    run_rank,
    run_synth,
    write_report_tables,
)

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_RUNTIME = 4


def configure_logging(verbose=False):
    level = logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    handlers = [logging.StreamHandler()]
    if settings.LOG_FILE:
        handlers.append(logging.FileHandler(settings.LOG_FILE, encoding="utf-8"))
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
    )


def handle_errors(command):
    """Map pipeline failures onto exit codes."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ConfigError as e:
            click.echo(f"Configuration error: {e}", err=True)
            sys.exit(EXIT_CONFIG)
        except DatasetError as e:
            click.echo(f"Dataset error: {e}", err=True)
            sys.exit(EXIT_DATASET)
        except Exception as e:
            logger.debug("Audit run failed", exc_info=True)
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_RUNTIME)
    return wrapper


def audit_options(command):
    """Flags shared by every command; each overrides the config file."""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file"),
        click.option("--seed", type=int, help="Split and generator seed"),
        click.option("--k", type=int, help="Ranking cutoff"),
        click.option("--l", type=int, help="Images used per identity"),
        click.option("--probe-frac", type=float, help="Share of the l images used as probes"),
        click.option("--gallery-range", type=click.Choice(["close", "long"]),
                     help="Gallery capture range; probes become long-range"),
        click.option("--exclude-mates", type=click.BOOL, help="Drop the probe's own identity from the matrix tables"),
        click.option("--alpha", type=float, help="KS significance level"),
        click.option("--workers", type=int, help="Ranking worker threads"),
        click.option("--out", "output_dir", type=click.Path(file_okay=False), help="Output directory"),
        click.option("--format", "formats", type=click.Choice(["json", "csv"]), multiple=True,
                     help="Report formats (repeatable)"),
        click.option("--verbose", is_flag=True, help="Debug logging"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _config(config_path, verbose, **overrides):
    configure_logging(verbose)
    overrides["formats"] = overrides.get("formats") or None
    return load_config(config_path, **overrides)


@click.group()
@click.version_option(__version__, prog_name="fairness-audit")
def cli():
    """Demographic fairness audit of face identification rankings."""


@cli.command()
@audit_options
@handle_errors
def synth(config_path, verbose, **overrides):
    """Generate a synthetic embedding dataset."""
    config = _config(config_path, verbose, **overrides)
    paths = run_synth(config)
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@cli.command()
@audit_options
@handle_errors
def rank(config_path, verbose, **overrides):
    """Split the dataset and rank every probe against the gallery."""
    config = _config(config_path, verbose, **overrides)
    split, gallery, rankings = run_rank(config, progress=verbose)
    click.echo(f"Ranked {rankings.n} probes against {len(gallery)} gallery identities (k={rankings.k})")
    click.echo(f"rankings: {config.input_path('rankings_path')}")


@cli.command()
@audit_options
@handle_errors
def audit(config_path, verbose, **overrides):
    """Compute the fairness report (ranks inline when no rankings file exists)."""
    config = _config(config_path, verbose, **overrides)
    report = run_audit(config, progress=verbose)
    disparity = report["disparity"]
    click.echo(f"Probes: {report['protocol']['n_probes']}  Groups: {len(report['groups'])}")
    click.echo(f"Overall disparate visibility: {disparity['overall_visibility']:.6f}")
    click.echo(f"Overall disparate exposure:   {disparity['overall_exposure']:.6f}")
    significance = report["significance"]
    flagged = sum(1 for pair in significance["pairs"] if pair["significant"])
    click.echo(f"Significant pairs at alpha={significance['alpha']}: {flagged} of {significance['n_comparisons']}")
    click.echo(f"Rank-1 identification rate: {report['identification']['rank1_identification_rate']:.4f}")


@cli.command()
@audit_options
@handle_errors
def report(config_path, verbose, **overrides):
    """Write the CSV tables of an existing audit report."""
    config = _config(config_path, verbose, **overrides)
    audit_report = load_report(config.out_dir / REPORT_FILE)
    paths = write_report_tables(audit_report, config.out_dir, exclude_mates=config.exclude_mates)
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


def main():
    cli()


if __name__ == "__main__":
    main()
