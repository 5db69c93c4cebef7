"""Command line: `finsgap run --config <path>` and `finsgap list`."""
from __future__ import annotations
import logging
from pathlib import Path
from typing import Optional

import typer
from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .core.errors import ConfigError, FinsgapError
from .laboratory import list_experiments, run_config

app = typer.Typer(
    name="finsgap",
    help="Sharp spectral gaps and rigidity on weighted Finsler manifolds",
    add_completion=False,
    no_args_is_help=True,
)

console = Console()
err_console = Console(stderr=True)


def _configure_logging(verbose: bool) -> None:
    log = logging.getLogger("finsgap")
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not any(isinstance(h, RichHandler) for h in log.handlers):
        log.addHandler(RichHandler(console=err_console, show_path=False, rich_tracebacks=False))
    log.propagate = False


@app.command()
def run(
    config: Path = typer.Option(..., "--config", "-c", help="Experiment configuration (JSON)"),
    out: Optional[Path] = typer.Option(None, "--out", "-o",
                                       help="Output directory (default: the config's output)"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, max=2 ** 64 - 1,
                                       help="Override the configured seed"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
):
    """Run one experiment; exit 0 on pass, 2 on a failed check, 1 on error."""
    _configure_logging(verbose)
    try:
        report = run_config(config, out_dir=out, seed=seed)
    except ConfigError as exc:
        err_console.print(f"[bold red]invalid config[/bold red] {config}: {exc}")
        raise typer.Exit(code=1)
    except FinsgapError as exc:
        err_console.print(f"[bold red]error[/bold red] {type(exc).__name__}: {exc}")
        raise typer.Exit(code=1)

    table = Table(title=f"[bold]{report.config['experiment']}[/bold]", box=box.SIMPLE)
    table.add_column("check", style="cyan", no_wrap=True)
    table.add_column("value", justify="right")
    table.add_column("tolerance", justify="right")
    table.add_column("", justify="center")
    for check in report.checks:
        table.add_row(check.name, f"{check.value:.6g}", f"{check.tolerance:.1e}",
                      "[green]pass[/green]" if check.passed else "[red]FAIL[/red]")
    console.print(table)
    if report.error is not None:
        err_console.print(f"[bold red]error[/bold red] {report.error}")
    verdict = "[green]PASS[/green]" if report.passed else "[red]FAIL[/red]"
    console.print(f"{verdict}  ({report.wall_time_s:.2f}s, {len(report.artifacts)} series)")
    raise typer.Exit(code=report.exit_code)


@app.command("list")
def list_command():
    """List experiments, their required config keys and the result each verifies."""
    table = Table(title="[bold]Experiments[/bold]", box=box.ROUNDED, header_style="bold magenta")
    table.add_column("experiment", style="cyan", no_wrap=True)
    table.add_column("verifies")
    table.add_column("required keys", style="dim")
    table.add_column("description")
    for experiment in list_experiments():
        table.add_row(experiment.name, experiment.theorem, ", ".join(experiment.required),
                      experiment.description)
    console.print(table)


def main() -> None:
    app()


if __name__ == "__main__":
    main()
