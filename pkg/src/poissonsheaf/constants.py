from __future__ import annotations

from fractions import Fraction
from typing import Final


DEFAULT_SEED: Final[int] = 20240917
DEFAULT_TOLERANCE: Final[float] = 1e-9
DEFAULT_SAMPLE_COUNT: Final[int] = 64
BOUNDARY_MARGIN: Final[float] = 1e-3

# Sampling window used when no region is given: [0, 1] on corner
# coordinates, [-1, 1] elsewhere.
DEFAULT_WINDOW: Final[Fraction] = Fraction(1)

BRACKET_PAIR_COUNT: Final[int] = 100
LEIBNIZ_TRIPLE_COUNT: Final[int] = 200
JACOBI_TRIPLE_COUNT: Final[int] = 50
RANDOM_POLYNOMIAL_DEGREE: Final[int] = 3
RANDOM_POLYNOMIAL_TERMS: Final[int] = 4
JACOBI_POLYNOMIAL_DEGREE: Final[int] = 2
# Random polynomial sections generated over every nonempty open, on top of
# the declared ones.
PROBES_PER_OPEN: Final[int] = 3

VARIABLE_PREFIX: Final[str] = "x"
EMPTY_OPEN: Final[str] = "<empty>"
INTERSECTION_SEPARATOR: Final[str] = "&"

DEFAULT_FORMAT: Final[str] = "text"
SUPPORTED_FORMATS: Final[tuple[str, ...]] = ("text", "json")

EXIT_OK: Final[int] = 0
EXIT_FAILED: Final[int] = 1
EXIT_USAGE: Final[int] = 2

# T^{ijk} = SCHOUTEN_JACOBI_SIGN * jacobi_defect(x_i, x_j, x_k)
SCHOUTEN_JACOBI_SIGN: Final[int] = -1
