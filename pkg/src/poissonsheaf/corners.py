"""
Model spaces R^n_k = [0, inf)^k x R^(n-k), box regions inside them, smooth
maps between model spaces and fibre products with their boundary
decomposition.
"""

from __future__ import annotations

import itertools
from collections import deque
from collections.abc import Iterable
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from fractions import Fraction

import numpy as np
import sympy

from poissonsheaf.definitions import DEFAULT_SETTINGS
from poissonsheaf.definitions import Finding
from poissonsheaf.definitions import PoissonSheafError
from poissonsheaf.definitions import VerificationSettings
from poissonsheaf.expr import DimensionMismatchError
from poissonsheaf.expr import Expr
from poissonsheaf.expr import constant
from poissonsheaf.expr import default_bounds
from poissonsheaf.expr import differentiate
from poissonsheaf.expr import evaluate
from poissonsheaf.expr import format_point
from poissonsheaf.expr import sample_points
from poissonsheaf.expr import variable
from poissonsheaf.typehints import Bounds
from poissonsheaf.typehints import Matrix
from poissonsheaf.typehints import Point


class ModelSpaceError(PoissonSheafError):
    """Invalid model space or region."""


class PointOutsideError(PoissonSheafError):
    """Point does not lie in the model space."""


class FibreProductError(PoissonSheafError):
    """Ill-posed fibre product."""


class UnsupportedMapError(PoissonSheafError):
    """Map class outside what fibre products can solve exactly."""


class TransversalityError(PoissonSheafError):
    """Stacked tangent map [df | -dg] drops rank on some stratum."""


class CornerConfigurationError(PoissonSheafError):
    """A boundary face of X meets a boundary face of Y over one fibre point."""


@dataclass(slots=True, frozen=True)
class ModelSpace:
    """R^n_k; the first k coordinates are constrained to be non-negative."""

    n: int
    k: int = 0

    def __post_init__(self) -> None:
        if self.n < 0 or not 0 <= self.k <= self.n:
            raise ModelSpaceError(f"invalid model space n={self.n}, k={self.k}")

    def __str__(self) -> str:
        return f"R^{self.n}_{self.k}"

    def contains(self, p: Point) -> bool:
        return len(p) == self.n and all(p[index] >= 0 for index in range(self.k))


def corner_depth(s: ModelSpace, p: Point) -> int:
    """Number of the first k coordinates of `p` that vanish."""
    if not s.contains(p):
        raise PointOutsideError(f"{format_point(p)} is not a point of {s}")
    return sum(1 for index in range(s.k) if p[index] == 0)


def boundary_faces(s: ModelSpace) -> list[tuple[int, ModelSpace]]:
    """The k faces {x_i = 0} (1-based i), each modelled on R^(n-1)_(k-1)."""
    return [(index, ModelSpace(s.n - 1, s.k - 1)) for index in range(1, s.k + 1)]


def _box_contains(box: Bounds, p: Point, corner_index: int) -> bool:
    for index, ((lower, upper), value) in enumerate(zip(box, p, strict=True)):
        closed_below = index < corner_index and lower == 0
        if value >= upper:
            return False
        if value < lower or (value == lower and not closed_below):
            return False
    return True


def _box_intersection(first: Bounds, second: Bounds) -> Bounds | None:
    box = tuple(
        (max(a_low, b_low), min(a_high, b_high))
        for (a_low, a_high), (b_low, b_high) in zip(first, second, strict=True)
    )
    if all(lower < upper for lower, upper in box):
        return box
    return None


def _box_within(inner: Bounds, outer: Bounds) -> bool:
    return all(
        o_low <= i_low and i_high <= o_high
        for (i_low, i_high), (o_low, o_high) in zip(inner, outer, strict=True)
    )


@dataclass(slots=True, frozen=True)
class Region:
    """
    Finite union of open boxes in a model space. On the first k
    coordinates a lower bound of exactly 0 is closed, so the region
    reaches the boundary face there.
    """

    ambient: ModelSpace
    boxes: tuple[Bounds, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for box in self.boxes:
            if len(box) != self.ambient.n:
                raise ModelSpaceError(
                    f"box with {len(box)} intervals in {self.ambient}"
                )
            for index, (lower, upper) in enumerate(box):
                if not lower < upper:
                    raise ModelSpaceError(f"empty interval ({lower}, {upper})")
                if index < self.ambient.k and lower < 0:
                    raise ModelSpaceError(
                        f"box leaves {self.ambient}: coordinate x{index + 1} starts at {lower}"
                    )

    @classmethod
    def empty(cls, ambient: ModelSpace) -> Region:
        return cls(ambient, ())

    @property
    def is_empty(self) -> bool:
        return not self.boxes

    def contains(self, p: Point) -> bool:
        if len(p) != self.ambient.n:
            raise DimensionMismatchError(
                f"point {format_point(p)} has {len(p)} coordinates, {self.ambient} needs {self.ambient.n}"
            )
        return any(_box_contains(box, p, self.ambient.k) for box in self.boxes)

    def sample_points(
        self, settings: VerificationSettings = DEFAULT_SETTINGS
    ) -> tuple[Point, ...]:
        return sample_points(self.boxes, settings)

    def intersection(self, other: Region) -> Region:
        boxes = []
        for first, second in itertools.product(self.boxes, other.boxes):
            box = _box_intersection(first, second)
            if box is not None and box not in boxes:
                boxes.append(box)
        return Region(self.ambient, tuple(boxes))

    def is_subset(
        self, other: Region, settings: VerificationSettings = DEFAULT_SETTINGS
    ) -> bool:
        """
        Exact when every box sits inside a single box of `other`; otherwise
        decided on seeded sample points.
        """
        if all(
            any(_box_within(box, outer) for outer in other.boxes) for box in self.boxes
        ):
            return True
        return all(other.contains(p) for p in self.sample_points(settings))

    def same_as(
        self, other: Region, settings: VerificationSettings = DEFAULT_SETTINGS
    ) -> bool:
        return self.is_subset(other, settings) and other.is_subset(self, settings)


@dataclass(slots=True, frozen=True)
class SmoothMapDesc:
    """Smooth map between model spaces given by component expressions."""

    source: ModelSpace
    target: ModelSpace
    components: tuple[Expr, ...]

    def __post_init__(self) -> None:
        if len(self.components) != self.target.n:
            raise ModelSpaceError(
                f"{len(self.components)} components for target {self.target}"
            )
        for component in self.components:
            if component.dimension != self.source.n:
                raise ModelSpaceError(
                    f"component {component} is not a function on {self.source}"
                )

    @classmethod
    def identity(cls, space: ModelSpace) -> SmoothMapDesc:
        return cls(
            space, space, tuple(variable(index, space.n) for index in range(1, space.n + 1))
        )

    @classmethod
    def face_inclusion(cls, space: ModelSpace, face: int) -> SmoothMapDesc:
        """i_X for the face {x_face = 0} of `space`."""
        face_space = ModelSpace(space.n - 1, space.k - 1)
        components = []
        for index in range(1, space.n + 1):
            if index == face:
                components.append(constant(0, face_space.n))
            else:
                shifted = index if index < face else index - 1
                components.append(variable(shifted, face_space.n))
        return cls(face_space, space, tuple(components))

    def __call__(self, p: Point) -> Point:
        return tuple(evaluate(component, p) for component in self.components)

    @property
    def is_affine(self) -> bool:
        return all(component.is_affine for component in self.components)

    def compose(self, inner: SmoothMapDesc) -> SmoothMapDesc:
        """self ∘ inner."""
        if inner.target != self.source:
            raise ModelSpaceError(
                f"cannot compose a map from {self.source} after one into {inner.target}"
            )
        return SmoothMapDesc(
            inner.source,
            self.target,
            tuple(
                component.substitute(inner.components, inner.source.n)
                for component in self.components
            ),
        )

    def restrict_to_face(self, face: int) -> SmoothMapDesc:
        """The composite self ∘ i_X on the boundary face {x_face = 0}."""
        return self.compose(SmoothMapDesc.face_inclusion(self.source, face))

    def affine_parts(self) -> tuple[tuple[tuple[Fraction, ...], ...], tuple[Fraction, ...]]:
        """Linear part and offset of an affine map, as exact rationals."""
        if not self.is_affine:
            raise UnsupportedMapError(
                "fibre products need affine map components, got "
                + ", ".join(str(component) for component in self.components)
            )
        origin = tuple(Fraction(0) for _ in range(self.source.n))
        offset = tuple(Fraction(value) for value in self(origin))
        linear = tuple(
            tuple(
                Fraction(evaluate(differentiate(component, index), origin))
                for index in range(1, self.source.n + 1)
            )
            for component in self.components
        )
        return linear, offset


def tangent_map(phi: SmoothMapDesc, u: Point) -> Matrix:
    """Jacobian of `phi` at `u`, shaped (target dim) x (source dim)."""
    return tuple(
        tuple(
            evaluate(differentiate(component, index), u)
            for index in range(1, phi.source.n + 1)
        )
        for component in phi.components
    )


def _rank(matrix: Matrix) -> int:
    """Exact rank for rational Jacobians, numerical rank otherwise."""
    if not matrix or not matrix[0]:
        return 0
    if all(isinstance(value, Fraction) for row in matrix for value in row):
        return int(sympy.Matrix(matrix).applyfunc(sympy.Rational).rank())
    return int(np.linalg.matrix_rank(np.array(matrix, dtype=float)))


@dataclass(slots=True, frozen=True)
class FibreProductDesc:
    """
    W = X x_{f,Z,g} Y together with the closed grid windows (`x_bounds`,
    `y_bounds`) in which carrier points are solved for.
    """

    x: ModelSpace
    y: ModelSpace
    z: ModelSpace
    f: SmoothMapDesc
    g: SmoothMapDesc
    x_bounds: Bounds = ()
    y_bounds: Bounds = ()
    step: Fraction = Fraction(1, 2)

    def __post_init__(self) -> None:
        if self.f.source != self.x or self.g.source != self.y:
            raise FibreProductError("map sources must be X and Y")
        if self.f.target != self.z or self.g.target != self.z:
            raise FibreProductError(
                f"f and g must both map to {self.z}, got {self.f.target} and {self.g.target}"
            )
        if self.step <= 0:
            raise FibreProductError(f"grid step must be positive, got {self.step}")
        for space, bounds in ((self.x, self.x_bounds), (self.y, self.y_bounds)):
            if bounds and len(bounds) != space.n:
                raise FibreProductError(f"window of dimension {len(bounds)} for {space}")

    def swapped(self) -> FibreProductDesc:
        """Y x_{g,Z,f} X."""
        return FibreProductDesc(
            self.y, self.x, self.z, self.g, self.f, self.y_bounds, self.x_bounds, self.step
        )

    def window(self, space: ModelSpace, bounds: Bounds) -> Bounds:
        return bounds or tuple(
            (lower * 2, upper * 2)
            for lower, upper in default_bounds(space.n, space.k)
        )


def fibre_product_dim(d: FibreProductDesc) -> int:
    """dim X + dim Y - dim Z."""
    dimension = d.x.n + d.y.n - d.z.n
    if dimension < 0:
        raise FibreProductError(
            f"empty/ill-posed fibre product: dimension {dimension}"
        )
    return dimension


def _grid(space: ModelSpace, bounds: Bounds, step: Fraction) -> list[Point]:
    axes = []
    for lower, upper in bounds:
        count = int((upper - lower) / step)
        axes.append([lower + step * index for index in range(count + 1)])
    return [p for p in itertools.product(*axes) if space.contains(p)]


def _apply_affine(
    parts: tuple[tuple[tuple[Fraction, ...], ...], tuple[Fraction, ...]], p: Point
) -> Point:
    linear, offset = parts
    return tuple(
        b + sum((a * Fraction(value) for a, value in zip(row, p, strict=True)), Fraction(0))
        for row, b in zip(linear, offset, strict=True)
    )


def _solve(
    f: SmoothMapDesc, x_grid: Iterable[Point], g: SmoothMapDesc, y_grid: Iterable[Point]
) -> list[tuple[Point, Point]]:
    f_parts, g_parts = f.affine_parts(), g.affine_parts()
    by_value: dict[Point, list[Point]] = {}
    for y in y_grid:
        by_value.setdefault(_apply_affine(g_parts, y), []).append(y)
    solutions = [
        (x, y) for x in x_grid for y in by_value.get(_apply_affine(f_parts, x), [])
    ]
    return sorted(solutions)


def fibre_product_carrier_samples(
    d: FibreProductDesc, step: Fraction | None = None
) -> list[tuple[Point, Point]]:
    """All grid pairs (x, y) inside the windows with f(x) = g(y), solved exactly."""
    step = step or d.step
    x_grid = _grid(d.x, d.window(d.x, d.x_bounds), step)
    y_grid = _grid(d.y, d.window(d.y, d.y_bounds), step)
    return _solve(d.f, x_grid, d.g, y_grid)


def count_components(points: Iterable[Point], step: Fraction) -> int:
    """Connected components of grid points; neighbours differ by at most one step per coordinate."""
    remaining = set(points)
    components = 0
    offsets = None
    while remaining:
        components += 1
        queue = deque([remaining.pop()])
        while queue:
            current = queue.popleft()
            if offsets is None:
                offsets = [
                    delta
                    for delta in itertools.product((-1, 0, 1), repeat=len(current))
                    if any(delta)
                ]
            for delta in offsets:
                neighbour = tuple(
                    value + step * shift for value, shift in zip(current, delta, strict=True)
                )
                if neighbour in remaining:
                    remaining.remove(neighbour)
                    queue.append(neighbour)
    return components


@dataclass(slots=True, frozen=True)
class BoundaryDecomposition:
    """Component counts on both sides of the boundary decomposition of W."""

    lhs: int
    x_term: int
    y_term: int
    per_face: tuple[tuple[str, int, int], ...] = ()

    @property
    def rhs(self) -> int:
        return self.x_term + self.y_term

    @property
    def matches(self) -> bool:
        return self.lhs == self.rhs

    def describe(self) -> str:
        return f"{self.lhs} = {self.x_term} + {self.y_term}"


def _face_bounds(bounds: Bounds, face: int) -> Bounds:
    return bounds[: face - 1] + bounds[face:]


def _stacked(first: Matrix, second: Matrix) -> Matrix:
    return tuple(
        tuple(row_f) + tuple(-value for value in row_g)
        for row_f, row_g in zip(first, second, strict=True)
    )


def _require_transverse(
    label: str,
    f: SmoothMapDesc,
    g: SmoothMapDesc,
    solutions: Sequence[tuple[Point, Point]],
    z_dimension: int,
    settings: VerificationSettings,
) -> None:
    for x, y in solutions[: settings.sample_count]:
        stacked = _stacked(tangent_map(f, x), tangent_map(g, y))
        if _rank(stacked) != z_dimension:
            raise TransversalityError(
                f"{label}: [df | -dg] has rank {_rank(stacked)} < {z_dimension} "
                f"at {format_point(x)}, {format_point(y)}"
            )


def boundary_decomposition_count(
    d: FibreProductDesc, settings: VerificationSettings = DEFAULT_SETTINGS
) -> BoundaryDecomposition:
    """
    Count components of dW directly (W's boundary points labelled by the
    face of X or Y they lie on) and of dX x_{f∘i_X,Z,g} Y and
    X x_{f,Z,g∘i_Y} dY (solved on the face model spaces).
    """
    if d.z.k != 0:
        raise FibreProductError(f"Z must have no boundary, got {d.z}")
    for name, mapping in (("f", d.f), ("g", d.g)):
        if not mapping.is_affine:
            raise UnsupportedMapError(f"map {name} is not affine")

    x_window, y_window = d.window(d.x, d.x_bounds), d.window(d.y, d.y_bounds)
    solutions = fibre_product_carrier_samples(d)

    for x, y in solutions:
        if corner_depth(d.x, x) and corner_depth(d.y, y):
            raise CornerConfigurationError(
                f"boundary of X meets boundary of Y over the fibre point "
                f"{format_point(x)} ~ {format_point(y)}"
            )
    _require_transverse("interior", d.f, d.g, solutions, d.z.n, settings)

    labelled: dict[str, list[Point]] = {}
    for x, y in solutions:
        for face in range(1, d.x.k + 1):
            if x[face - 1] == 0:
                labelled.setdefault(f"dX{face}", []).append(x + y)
        for face in range(1, d.y.k + 1):
            if y[face - 1] == 0:
                labelled.setdefault(f"dY{face}", []).append(x + y)
    lhs_counts = {
        label: count_components(points, d.step) for label, points in labelled.items()
    }

    per_face: list[tuple[str, int, int]] = []
    x_term = 0
    for face, face_space in boundary_faces(d.x):
        f_face = d.f.restrict_to_face(face)
        face_solutions = _solve(
            f_face,
            _grid(face_space, _face_bounds(x_window, face), d.step),
            d.g,
            _grid(d.y, y_window, d.step),
        )
        _require_transverse(f"face x{face}=0 of X", f_face, d.g, face_solutions, d.z.n, settings)
        count = count_components((x + y for x, y in face_solutions), d.step)
        x_term += count
        per_face.append((f"dX{face}", lhs_counts.get(f"dX{face}", 0), count))

    y_term = 0
    for face, face_space in boundary_faces(d.y):
        g_face = d.g.restrict_to_face(face)
        face_solutions = _solve(
            d.f,
            _grid(d.x, x_window, d.step),
            g_face,
            _grid(face_space, _face_bounds(y_window, face), d.step),
        )
        _require_transverse(f"face y{face}=0 of Y", d.f, g_face, face_solutions, d.z.n, settings)
        count = count_components((x + y for x, y in face_solutions), d.step)
        y_term += count
        per_face.append((f"dY{face}", lhs_counts.get(f"dY{face}", 0), count))

    return BoundaryDecomposition(
        lhs=sum(lhs_counts.values()),
        x_term=x_term,
        y_term=y_term,
        per_face=tuple(per_face),
    )


def check_fibre_square(
    d: FibreProductDesc,
    probes: Sequence[Expr],
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> tuple[Finding, ...]:
    """
    On every carrier point, pulling a function on Z back through X and
    through Y gives the same value: c∘f∘π_x = c∘g∘π_y on W.
    """
    solutions = fibre_product_carrier_samples(d)
    findings = []
    for probe in probes:
        through_x = probe.substitute(d.f.components, d.x.n)
        through_y = probe.substitute(d.g.components, d.y.n)
        mismatches = [
            (x, y)
            for x, y in solutions
            if abs(evaluate(through_x, x) - evaluate(through_y, y)) > settings.tolerance
        ]
        detail = f"{len(solutions)} carrier points"
        if mismatches:
            x, y = mismatches[0]
            detail = f"differs at {format_point(x)} ~ {format_point(y)}"
        findings.append(Finding.verdict("fibre-square", str(probe), not mismatches, detail))
    return tuple(findings)

