"""
poissonsheaf CLI - verification batteries for sheaves of smooth functions,
Poisson bivectors and fibre products on manifolds with corners.

Every command reads one JSON manifest and exits with
- 0 when every finding passes,
- 1 when any finding fails,
- 2 on usage, load or reference errors.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from typing import Final
from typing import NoReturn

import click

from poissonsheaf.console import console
from poissonsheaf.console import echo
from poissonsheaf.console import error
from poissonsheaf.constants import DEFAULT_FORMAT
from poissonsheaf.constants import DEFAULT_SEED
from poissonsheaf.constants import DEFAULT_TOLERANCE
from poissonsheaf.constants import EXIT_FAILED
from poissonsheaf.constants import EXIT_OK
from poissonsheaf.constants import EXIT_USAGE
from poissonsheaf.constants import SUPPORTED_FORMATS
from poissonsheaf.core import run_bracket
from poissonsheaf.core import run_directed
from poissonsheaf.core import run_fibre
from poissonsheaf.core import run_poisson_battery
from poissonsheaf.core import run_sheaf_battery
from poissonsheaf.core import run_stalk
from poissonsheaf.definitions import ReportDocument
from poissonsheaf.definitions import Status
from poissonsheaf.definitions import VerificationSettings
from poissonsheaf.exporters import exporter_for
from poissonsheaf.exporters.text import TextReportExporter
from poissonsheaf.manifest import load_manifest
from poissonsheaf.typehints import Point


STATUS_STYLES: Final[dict[Status, str]] = {
    Status.PASS: "green",
    Status.FAIL: "bold red",
    Status.WARN: "yellow",
}


def handle_exception(verbose: bool, exc: Exception) -> NoReturn:
    """Report an exception with an optional rich traceback, exiting with the usage code."""
    if verbose:
        console.print_exception(show_locals=False, width=300, max_frames=3)
        raise SystemExit(EXIT_USAGE)
    error(str(exc), EXIT_USAGE)


def parse_point(ctx: click.Context, param: click.Parameter, value: str) -> Point:
    """Comma-separated exact coordinates, e.g. `0,1/2`."""
    try:
        return tuple(Fraction(part.strip()) for part in value.split(","))
    except (ValueError, ZeroDivisionError):
        raise click.BadParameter(f"invalid point {value!r}; use e.g. 0,1/2")


manifest_argument = click.argument(
    "manifest_path",
    metavar="MANIFEST",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)

verbose_option = click.option(
    "--verbose", is_flag=True, help="Show full tracebacks on errors"
)

report_options = [
    click.option(
        "--seed",
        default=DEFAULT_SEED,
        type=click.IntRange(min=0),
        show_default=True,
        help="Seed for sample points and random test polynomials",
    ),
    click.option(
        "--tol",
        "tolerance",
        default=DEFAULT_TOLERANCE,
        type=click.FloatRange(min=0),
        show_default=True,
        help="Absolute tolerance for sampled comparisons",
    ),
    click.option(
        "--format",
        "format_name",
        type=click.Choice(SUPPORTED_FORMATS),
        default=DEFAULT_FORMAT,
        show_default=True,
        help="Report format",
    ),
    click.option(
        "--output",
        type=click.Path(dir_okay=False, path_type=Path),
        help="Write the report to this file instead of standard output",
    ),
    verbose_option,
]


def add_options(options):
    """Decorator to add multiple options to a command."""

    def decorator(func):
        for option in reversed(options):
            func = option(func)
        return func

    return decorator


def emit(document: ReportDocument, format_name: str, output: Path | None) -> None:
    """Print or write the report, then exit with the status-derived code."""
    exporter = exporter_for(format_name)
    if output is not None:
        exporter.export(document, output)
    elif isinstance(exporter, TextReportExporter):
        for finding in document.findings:
            echo(exporter.line(finding), style=STATUS_STYLES[finding.status])
        echo(exporter.summary(document), style=STATUS_STYLES[document.status])
    else:
        echo(exporter.render(document).rstrip("\n"))
    raise SystemExit(EXIT_FAILED if document.status is Status.FAIL else EXIT_OK)


def run_report(
    build,
    manifest_path: Path,
    seed: int,
    tolerance: float,
    format_name: str,
    output: Path | None,
    verbose: bool,
) -> None:
    settings = VerificationSettings(seed=seed, tolerance=tolerance)
    try:
        document = build(load_manifest(manifest_path, settings), settings)
    except Exception as exc:
        handle_exception(verbose, exc)
    emit(document, format_name, output)


@click.group()
@click.version_option()
def main():
    """poissonsheaf - mechanical checks for sheaves, Poisson brackets and fibre products."""
    pass


@main.command("check-sheaf")
@manifest_argument
@add_options(report_options)
def check_sheaf(
    manifest_path: Path,
    seed: int,
    tolerance: float,
    format_name: str,
    output: Path | None,
    verbose: bool,
) -> None:
    """Presheaf composition, locality, gluing, equalizer and pullback-morphism checks."""
    run_report(run_sheaf_battery, manifest_path, seed, tolerance, format_name, output, verbose)


@main.command("check-poisson")
@manifest_argument
@add_options(report_options)
def check_poisson(
    manifest_path: Path,
    seed: int,
    tolerance: float,
    format_name: str,
    output: Path | None,
    verbose: bool,
) -> None:
    """Antisymmetry, Leibniz, Jacobi, Schouten and restriction checks of the bracket."""
    run_report(run_poisson_battery, manifest_path, seed, tolerance, format_name, output, verbose)


@main.command("check")
@manifest_argument
@add_options(report_options)
def check(
    manifest_path: Path,
    seed: int,
    tolerance: float,
    format_name: str,
    output: Path | None,
    verbose: bool,
) -> None:
    """Run the batteries listed under the manifest's `checks` key."""
    run_report(run_directed, manifest_path, seed, tolerance, format_name, output, verbose)


@main.command("fibre")
@manifest_argument
@click.argument("name")
@add_options(report_options)
def fibre(
    manifest_path: Path,
    name: str,
    seed: int,
    tolerance: float,
    format_name: str,
    output: Path | None,
    verbose: bool,
) -> None:
    """Dimension, transversality and boundary decomposition of the fibre product NAME."""
    run_report(
        lambda manifest, settings: run_fibre(manifest, name, settings),
        manifest_path,
        seed,
        tolerance,
        format_name,
        output,
        verbose,
    )


@main.command("stalk")
@manifest_argument
@click.argument("section")
@click.argument("point", callback=parse_point)
@click.option("--morphism", help="Also check the stalk map of this declared pullback")
@add_options(report_options)
def stalk(
    manifest_path: Path,
    section: str,
    point: Point,
    morphism: str | None,
    seed: int,
    tolerance: float,
    format_name: str,
    output: Path | None,
    verbose: bool,
) -> None:
    """Residue and maximal-ideal membership of the germ of SECTION at POINT."""
    run_report(
        lambda manifest, settings: run_stalk(manifest, section, point, morphism, settings),
        manifest_path,
        seed,
        tolerance,
        format_name,
        output,
        verbose,
    )


@main.command("bracket")
@manifest_argument
@click.argument("f_name", metavar="F")
@click.argument("g_name", metavar="G")
@verbose_option
def bracket(manifest_path: Path, f_name: str, g_name: str, verbose: bool) -> None:
    """Print the canonical Poisson bracket {F, G} of two named sections."""
    try:
        result = run_bracket(load_manifest(manifest_path), f_name, g_name)
    except Exception as exc:
        handle_exception(verbose, exc)
    echo(str(result))


if __name__ == "__main__":
    main()
