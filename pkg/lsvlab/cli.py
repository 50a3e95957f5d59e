from __future__ import annotations

"""CLI interface for lsvlab."""

import logging
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import __version__
from .config import apply_overrides, create_default_config, load_config, parse_config, save_config, validate
from .database import RunLedger
from .errors import ConfigError, DomainError, NonConvergenceError
from .experiments import ExperimentRegistry, run_experiment
from .experiments.base import run_hash
from .models import Diagnostic, ExperimentConfig
from .utils.cache import OperatorCache


app = typer.Typer(
    name="lsvlab",
    help="Random compositions of LSV maps: return-time tails, transfer operators and limit laws",
    no_args_is_help=True,
)

console = Console()

EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3


def setup_logging(verbose: bool = False) -> None:
    """Route library logs and warnings through rich."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
        force=True,
    )
    logging.captureWarnings(True)


def get_cache(config: ExperimentConfig) -> Optional[OperatorCache]:
    if not config.settings.cache:
        return None
    return OperatorCache(Path(config.settings.cache_dir) if config.settings.cache_dir else None)


def get_ledger(config: ExperimentConfig) -> Optional[RunLedger]:
    if not config.settings.ledger:
        return None
    return RunLedger(Path(config.settings.ledger_path) if config.settings.ledger_path else None)


def _print_diagnostics(diagnostics: list[Diagnostic]) -> None:
    table = Table(title="Configuration problems", show_header=True, header_style="bold red")
    table.add_column("Field", style="yellow")
    table.add_column("Problem")
    for d in diagnostics:
        table.add_row(d.field, d.message)
    console.print(table)


def _summary_table(summary: dict) -> Table:
    table = Table(show_header=True, header_style="bold cyan")
    table.add_column("Result")
    table.add_column("Value", justify="right")
    for key, value in summary.items():
        if isinstance(value, dict):
            continue
        if isinstance(value, float):
            value = f"{value:.6g}"
        table.add_row(key, str(value))
    return table


# ============================================================================
# Run Commands
# ============================================================================

@app.command()
def run(
    config_path: Path = typer.Argument(..., help="Experiment YAML file"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Override master_seed"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Override output_dir"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Worker processes"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
):
    """Run an experiment and write its CSVs, summary.json and manifest.json."""
    setup_logging(verbose)
    try:
        config = parse_config(apply_overrides(load_config(config_path), seed=seed, out=out, workers=workers))
    except ConfigError as exc:
        _print_diagnostics(exc.diagnostics)
        raise typer.Exit(EXIT_CONFIG)

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
    ) as progress:
        progress.add_task(f"Running {config.kind.value} ({config.law.label})...", total=None)
        try:
            manifest, output_dir = run_experiment(config, get_cache(config))
        except NonConvergenceError as exc:
            console.print(f"[red]Did not converge:[/] {exc}")
            raise typer.Exit(EXIT_NONCONVERGENCE)
        except DomainError as exc:
            console.print(f"[red]Precheck failed:[/] {exc}")
            raise typer.Exit(EXIT_CONFIG)

    ledger = get_ledger(config)
    if ledger is not None:
        ledger.record_run(manifest, run_hash(config), output_dir)

    style = "green" if manifest.exit_code == 0 else "yellow"
    console.print(Panel(
        _summary_table(manifest.summary),
        title=f"{config.kind.value} -> {output_dir}",
        subtitle=f"{manifest.status}, {manifest.wall_clock_seconds:.1f}s",
        border_style=style,
    ))
    if manifest.exit_code:
        raise typer.Exit(manifest.exit_code)


@app.command("validate")
def validate_command(
    config_path: Path = typer.Argument(..., help="Experiment YAML file"),
):
    """Check a config without running it."""
    try:
        raw = load_config(config_path)
    except ConfigError as exc:
        _print_diagnostics(exc.diagnostics)
        raise typer.Exit(EXIT_CONFIG)

    diagnostics = validate(apply_overrides(raw))
    if diagnostics:
        _print_diagnostics(diagnostics)
        raise typer.Exit(EXIT_CONFIG)
    console.print(f"[green]{config_path} is valid[/]")


# ============================================================================
# Utility Commands
# ============================================================================

@app.command()
def history(
    limit: int = typer.Option(20, "--limit", "-l", help="Number of runs to show"),
    kind: Optional[str] = typer.Option(None, "--kind", "-k", help="Only this experiment kind"),
    ledger_path: Optional[Path] = typer.Option(None, "--ledger", help="Ledger database"),
):
    """View recent runs."""
    runs = RunLedger(ledger_path).recent_runs(limit=limit, kind=kind)

    if not runs:
        console.print("[yellow]No runs recorded.[/]")
        return

    table = Table(title="Recent Runs", show_header=True)
    table.add_column("Date")
    table.add_column("Kind")
    table.add_column("Law")
    table.add_column("Seed", justify="right")
    table.add_column("Status")
    table.add_column("Seconds", justify="right")
    table.add_column("Config")

    for r in runs:
        table.add_row(
            r["started_at"].strftime("%b %d %H:%M"),
            r["kind"],
            r["law"] or "",
            str(r["master_seed"]),
            r["status"],
            f"{r['wall_clock_seconds']:.1f}",
            r["config_hash"][:12],
        )

    console.print(table)


@app.command()
def kinds():
    """List the experiment kinds."""
    table = Table(title="Experiments", show_header=True)
    table.add_column("Kind", style="cyan")
    table.add_column("Description")
    for kind, experiment_class in ExperimentRegistry.get_all().items():
        table.add_row(kind.value, experiment_class.DESCRIPTION)
    console.print(table)


@app.command()
def init(
    path: Path = typer.Argument(Path("config.yaml"), help="Where to write the template"),
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite an existing file"),
):
    """Write a template experiment config."""
    if path.exists() and not force:
        console.print(f"[red]{path} exists; use --force to overwrite[/]")
        raise typer.Exit(1)
    save_config(create_default_config(), path)
    console.print(f"[green]Wrote {path}[/]")


@app.command()
def version():
    """Show the version."""
    console.print(f"lsvlab {__version__}")


if __name__ == "__main__":
    app()
