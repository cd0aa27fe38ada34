from fractions import Fraction
from pathlib import Path

import pytest
from click.testing import CliRunner

from poissonsheaf.corners import ModelSpace
from poissonsheaf.corners import Region
from poissonsheaf.expr import parse
from poissonsheaf.manifest import Manifest
from poissonsheaf.manifest import load_manifest
from poissonsheaf.poisson import BivectorField
from poissonsheaf.sheaf import FunctionPresheaf
from poissonsheaf.sheaf import OpenLattice


FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def load_fixture(name: str) -> Manifest:
    return load_manifest(fixture_path(name))


def box(*intervals: tuple[int | str, int | str]):
    return tuple((Fraction(lower), Fraction(upper)) for lower, upper in intervals)


def bivector(n: int, entries: dict[tuple[int, int], str], k: int = 0) -> BivectorField:
    return BivectorField.from_upper(
        ModelSpace(n, k), {pair: parse(text, n) for pair, text in entries.items()}
    )


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def so3() -> BivectorField:
    return bivector(3, {(1, 2): "x3", (2, 3): "x1", (3, 1): "x2"})


@pytest.fixture
def twobox() -> FunctionPresheaf:
    """R^2_1 with U = [0,3)x(-1,1) covered by A = [0,2)x(-1,1) and B = (1,3)x(-1,1)."""
    space = ModelSpace(2, 1)
    regions = {
        "U": Region(space, (box((0, 3), (-1, 1)),)),
        "A": Region(space, (box((0, 2), (-1, 1)),)),
        "B": Region(space, (box((1, 3), (-1, 1)),)),
    }
    return FunctionPresheaf(OpenLattice.build(space, regions, [("A", "U"), ("B", "U")]))


@pytest.fixture
def nested() -> FunctionPresheaf:
    """R^1 with W = (-1/4,1/4) <= V = (-1/2,1/2) <= U = (-1,1)."""
    space = ModelSpace(1)
    regions = {
        "U": Region(space, (box((-1, 1)),)),
        "V": Region(space, (box(("-1/2", "1/2")),)),
        "W": Region(space, (box(("-1/4", "1/4")),)),
    }
    return FunctionPresheaf(OpenLattice.build(space, regions))
