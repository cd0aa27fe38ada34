"""
Symbolic smooth functions on coordinate charts.

An `Expr` is an immutable sympy tree over the coordinate variables
`x1..xn` of a fixed ambient dimension. Polynomials and rational functions
are canonicalized exactly; anything involving `sin`, `cos` or `exp` that
expansion cannot decide is compared at seeded interior sample points and
the verdict says so.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import sympy
from sympy.printing.str import StrPrinter

from poissonsheaf.constants import DEFAULT_WINDOW
from poissonsheaf.definitions import DEFAULT_SETTINGS
from poissonsheaf.definitions import PoissonSheafError
from poissonsheaf.definitions import Verdict
from poissonsheaf.definitions import VerificationSettings
from poissonsheaf.parser import parse_node
from poissonsheaf.parser import variable_index
from poissonsheaf.parser import variable_symbol
from poissonsheaf.typehints import Bounds
from poissonsheaf.typehints import Point
from poissonsheaf.typehints import Real


class DimensionMismatchError(PoissonSheafError):
    """Operands or points live in different ambient dimensions."""


class EvaluationError(PoissonSheafError):
    """Expression has no finite value at the requested point."""


class GrammarPrinter(StrPrinter):
    """Prints sympy trees in the parse grammar (`^` powers, no `E`)."""

    def _print_Exp1(self, expr: sympy.Expr) -> str:
        return "exp(1)"

    def doprint(self, expr: sympy.Expr) -> str:
        return super().doprint(expr).replace("**", "^")


PRINTER = GrammarPrinter()

type Operand = Expr | int | Fraction


def variables(dimension: int) -> tuple[sympy.Symbol, ...]:
    """Coordinate symbols x1..x<dimension>."""
    return tuple(variable_symbol(index) for index in range(1, dimension + 1))


@dataclass(slots=True, frozen=True)
class Expr:
    """Immutable smooth function over the coordinates of an n-dimensional chart."""

    node: sympy.Expr
    dimension: int

    def __post_init__(self) -> None:
        if self.dimension < 0:
            raise DimensionMismatchError(f"negative dimension {self.dimension}")
        allowed = set(variables(self.dimension))
        stray = self.node.free_symbols - allowed
        if stray:
            names = ", ".join(sorted(str(symbol) for symbol in stray))
            raise DimensionMismatchError(
                f"variables {names} outside dimension {self.dimension}"
            )

    def __str__(self) -> str:
        return PRINTER.doprint(self.node)

    def _coerce(self, other: Operand) -> Expr:
        if isinstance(other, Expr):
            if other.dimension != self.dimension:
                raise DimensionMismatchError(
                    f"cannot combine dimension {self.dimension} with {other.dimension}"
                )
            return other
        return constant(other, self.dimension)

    def __add__(self, other: Operand) -> Expr:
        return Expr(self.node + self._coerce(other).node, self.dimension)

    def __radd__(self, other: Operand) -> Expr:
        return self._coerce(other) + self

    def __sub__(self, other: Operand) -> Expr:
        return Expr(self.node - self._coerce(other).node, self.dimension)

    def __rsub__(self, other: Operand) -> Expr:
        return self._coerce(other) - self

    def __mul__(self, other: Operand) -> Expr:
        return Expr(self.node * self._coerce(other).node, self.dimension)

    def __rmul__(self, other: Operand) -> Expr:
        return self._coerce(other) * self

    def __truediv__(self, other: Operand) -> Expr:
        denominator = self._coerce(other)
        if denominator.node.is_zero is True:
            raise EvaluationError("division by the zero constant")
        return Expr(self.node / denominator.node, self.dimension)

    def __neg__(self) -> Expr:
        return Expr(-self.node, self.dimension)

    def __pow__(self, exponent: int) -> Expr:
        return Expr(self.node**exponent, self.dimension)

    @property
    def is_polynomial(self) -> bool:
        return bool(self.node.is_polynomial(*variables(self.dimension)))

    @property
    def is_rational(self) -> bool:
        """True when the expression is a quotient of polynomials."""
        return bool(self.node.is_rational_function(*variables(self.dimension)))

    @property
    def is_affine(self) -> bool:
        if not self.is_polynomial:
            return False
        if self.dimension == 0:
            return True
        return sympy.Poly(self.node, *variables(self.dimension)).total_degree() <= 1

    @property
    def is_zero(self) -> bool:
        """Canonically zero."""
        return canonicalize(self).node == 0

    def substitute(self, images: Sequence[Expr], dimension: int) -> Expr:
        """Compose with a map whose components are `images` (c ↦ c ∘ images)."""
        if len(images) != self.dimension:
            raise DimensionMismatchError(
                f"{len(images)} images for a function of {self.dimension} variables"
            )
        for image in images:
            if image.dimension != dimension:
                raise DimensionMismatchError(
                    f"image {image} does not live in dimension {dimension}"
                )
        replacements = {
            symbol: image.node
            for symbol, image in zip(variables(self.dimension), images, strict=True)
        }
        return Expr(self.node.xreplace(replacements), dimension)


def constant(value: int | Fraction, dimension: int) -> Expr:
    """Constant function with an exact rational value."""
    value = Fraction(value)
    return Expr(sympy.Rational(value.numerator, value.denominator), dimension)


def zero(dimension: int) -> Expr:
    return constant(0, dimension)


def variable(index: int, dimension: int) -> Expr:
    """Coordinate function x<index> (1-based)."""
    return Expr(variable_symbol(index), dimension)


def parse(text: str, dimension: int) -> Expr:
    """Parse expression text under the given ambient dimension."""
    return Expr(parse_node(text, dimension), dimension)


def differentiate(e: Expr, var: str | int) -> Expr:
    """Exact partial derivative with respect to a coordinate variable."""
    index = var if isinstance(var, int) else variable_index(var, e.dimension)
    if not 1 <= index <= e.dimension:
        raise DimensionMismatchError(
            f"no variable x{index} in dimension {e.dimension}"
        )
    return Expr(sympy.diff(e.node, variable_symbol(index)), e.dimension)


def gradient(e: Expr) -> tuple[Expr, ...]:
    return tuple(differentiate(e, index) for index in range(1, e.dimension + 1))


def _canonical_node(node: sympy.Expr, symbols: tuple[sympy.Symbol, ...]) -> sympy.Expr:
    expanded = sympy.expand(node)
    if expanded.is_polynomial(*symbols):
        return expanded
    if expanded.is_rational_function(*symbols):
        return sympy.cancel(sympy.together(expanded))
    return expanded


def canonicalize(e: Expr) -> Expr:
    """
    Canonical form: polynomials fully expanded with collected coefficients,
    rational functions as a reduced quotient of expanded polynomials,
    primitive arguments expanded in place.
    """
    return Expr(_canonical_node(e.node, variables(e.dimension)), e.dimension)


def _to_sympy_number(value: Real) -> sympy.Expr:
    if isinstance(value, float):
        return sympy.Float(value)
    value = Fraction(value)
    return sympy.Rational(value.numerator, value.denominator)


def evaluate(e: Expr, p: Point) -> Real:
    """
    Value of `e` at `p`. Exact (a Fraction) whenever the result is rational,
    which is always the case for polynomials at rational points.
    """
    if len(p) != e.dimension:
        raise DimensionMismatchError(
            f"point of dimension {len(p)} for an expression in dimension {e.dimension}"
        )
    replacements = {
        symbol: _to_sympy_number(value)
        for symbol, value in zip(variables(e.dimension), p, strict=True)
    }
    result = e.node.xreplace(replacements)
    if result.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo):
        raise EvaluationError(f"{e} has no finite value at {format_point(p)}")
    if result.is_Rational:
        return Fraction(int(result.p), int(result.q))
    value = float(result.evalf())
    if not math.isfinite(value):
        raise EvaluationError(f"{e} has no finite value at {format_point(p)}")
    return value


@lru_cache(maxsize=4096)
def _compiled(node: sympy.Expr, dimension: int) -> Callable[..., float]:
    return sympy.lambdify(variables(dimension), node, modules="math")


def sample_values(e: Expr, points: Sequence[Point]) -> tuple[float, ...]:
    """Floating-point values of `e` at many points."""
    function = _compiled(e.node, e.dimension)
    values: list[float] = []
    for point in points:
        try:
            value = float(function(*(float(coordinate) for coordinate in point)))
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise EvaluationError(
                f"{e} cannot be evaluated at {format_point(point)}: {exc}"
            ) from exc
        if not math.isfinite(value):
            raise EvaluationError(f"{e} has no finite value at {format_point(point)}")
        values.append(value)
    return tuple(values)


def default_bounds(dimension: int, corner_index: int = 0) -> Bounds:
    """Sampling window: [0, 1] on the first `corner_index` coordinates, [-1, 1] on the rest."""
    return tuple(
        (Fraction(0), DEFAULT_WINDOW) if index < corner_index else (-DEFAULT_WINDOW, DEFAULT_WINDOW)
        for index in range(dimension)
    )


def sample_points(
    boxes: Sequence[Bounds], settings: VerificationSettings = DEFAULT_SETTINGS
) -> tuple[Point, ...]:
    """
    Deterministic seeded points strictly inside a union of boxes, each
    coordinate at least `settings.margin` away from the box faces.
    """
    if not boxes:
        return ()
    rng = np.random.default_rng(settings.seed)
    points: list[Point] = []
    for index in range(settings.sample_count):
        box = boxes[index % len(boxes)]
        coordinates: list[float] = []
        for lower, upper in box:
            low, high = float(lower) + settings.margin, float(upper) - settings.margin
            if high <= low:
                coordinates.append((float(lower) + float(upper)) / 2)
            else:
                coordinates.append(float(rng.uniform(low, high)))
        points.append(tuple(coordinates))
    return tuple(points)


def compare(
    a: Expr,
    b: Expr,
    boxes: Sequence[Bounds] | None = None,
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> Verdict:
    """
    Three-valued equality. Rational differences are decided exactly;
    otherwise both sides are compared at seeded interior sample points of
    `boxes` (the default window when omitted).
    """
    if a.dimension != b.dimension:
        raise DimensionMismatchError(
            f"cannot compare dimension {a.dimension} with {b.dimension}"
        )
    difference = canonicalize(a - b)
    if difference.node == 0:
        return Verdict.PROVEN_EQUAL
    if difference.is_rational:
        return Verdict.PROVEN_UNEQUAL
    points = sample_points(boxes or (default_bounds(a.dimension),), settings)
    values = sample_values(difference, points)
    if all(abs(value) <= settings.tolerance for value in values):
        return Verdict.SAMPLED_EQUAL
    return Verdict.SAMPLED_UNEQUAL


def expr_equal(
    a: Expr,
    b: Expr,
    boxes: Sequence[Bounds] | None = None,
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> bool:
    return compare(a, b, boxes, settings).holds


def reals_agree(
    a: Real, b: Real, settings: VerificationSettings = DEFAULT_SETTINGS
) -> bool:
    """Exact equality for two Fractions, relative tolerance once either side is a float."""
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(float(a) - float(b)) <= settings.tolerance * max(1.0, abs(float(b)))


def random_polynomial(
    rng: np.random.Generator, dimension: int, degree: int, terms: int
) -> Expr:
    """Random polynomial with small nonzero integer coefficients and total degree <= `degree`."""
    total = sympy.Integer(0)
    symbols = variables(dimension)
    for _ in range(terms):
        coefficient = int(rng.choice([-3, -2, -1, 1, 2, 3]))
        exponents = [0] * dimension
        for _ in range(int(rng.integers(0, degree + 1))):
            if dimension:
                exponents[int(rng.integers(dimension))] += 1
        monomial = sympy.Integer(coefficient)
        for symbol, exponent in zip(symbols, exponents, strict=True):
            monomial *= symbol**exponent
        total += monomial
    return Expr(total, dimension)


def format_real(value: Real) -> str:
    """Stable textual form of a real: exact for Fractions, 12 significant digits otherwise."""
    if isinstance(value, Fraction):
        return str(value)
    return f"{value:.12g}"


def format_point(p: Point) -> str:
    return "(" + ", ".join(format_real(value) for value in p) + ")"
