from __future__ import annotations

from typing import Any
from typing import NoReturn

from rich.console import Console


console = Console(highlight=False, soft_wrap=True, emoji=False)
error_console = Console(stderr=True, highlight=False, soft_wrap=True, emoji=False)


def echo(message: str, style: str | None = None, **kwargs: Any) -> None:
    """Print a plain line to standard output; markup is never interpreted."""
    console.print(message, style=style, markup=False, **kwargs)


def warning(message: str) -> None:
    """Print warning message to stderr without terminating execution."""
    error_console.print(f"Warning: {message}", style="yellow", markup=False)


def error(message: str, code: int = 2) -> NoReturn:
    """Print error to stderr and exit with specified code."""
    error_console.print(f"Error: {message}", style="bold red", markup=False)
    raise SystemExit(code)
