"""
Bivector fields and the Poisson bracket {F, G} = sum_ij pi^ij dF/dx_i dG/dx_j,
with the Jacobi, Schouten and Leibniz checks and the restriction
compatibility of the bracket as an operation on sections.
"""

from __future__ import annotations

import itertools
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from fractions import Fraction

from poissonsheaf.constants import SCHOUTEN_JACOBI_SIGN
from poissonsheaf.corners import ModelSpace
from poissonsheaf.definitions import DEFAULT_SETTINGS
from poissonsheaf.definitions import Finding
from poissonsheaf.definitions import JacobiVerdict
from poissonsheaf.definitions import PoissonSheafError
from poissonsheaf.definitions import Status
from poissonsheaf.definitions import VerificationSettings
from poissonsheaf.expr import DimensionMismatchError
from poissonsheaf.expr import Expr
from poissonsheaf.expr import canonicalize
from poissonsheaf.expr import compare
from poissonsheaf.expr import default_bounds
from poissonsheaf.expr import differentiate
from poissonsheaf.expr import expr_equal
from poissonsheaf.expr import format_real
from poissonsheaf.expr import sample_points
from poissonsheaf.expr import sample_values
from poissonsheaf.expr import variable
from poissonsheaf.expr import zero
from poissonsheaf.sheaf import FunctionPresheaf
from poissonsheaf.sheaf import Section
from poissonsheaf.typehints import IndexPair
from poissonsheaf.typehints import IndexTriple
from poissonsheaf.typehints import OpenName


class AntisymmetryError(PoissonSheafError):
    """Bivector components with pi^ij != -pi^ji."""


@dataclass(slots=True, frozen=True)
class BivectorField:
    """n x n antisymmetric matrix of component functions pi^ij (0-based storage)."""

    ambient: ModelSpace
    components: tuple[tuple[Expr, ...], ...]

    def __post_init__(self) -> None:
        n = self.ambient.n
        if len(self.components) != n or any(len(row) != n for row in self.components):
            raise DimensionMismatchError(f"bivector on {self.ambient} must be {n}x{n}")
        for row in self.components:
            for entry in row:
                if entry.dimension != n:
                    raise DimensionMismatchError(
                        f"component {entry} is not a function on {self.ambient}"
                    )
        for i, j in itertools.combinations_with_replacement(range(n), 2):
            if not canonicalize(self.components[i][j] + self.components[j][i]).is_zero:
                raise AntisymmetryError(
                    f"pi^{i + 1}{j + 1} = {self.components[i][j]} but "
                    f"pi^{j + 1}{i + 1} = {self.components[j][i]}"
                )

    @classmethod
    def from_upper(
        cls, ambient: ModelSpace, entries: Mapping[IndexPair, Expr]
    ) -> BivectorField:
        """
        Build from 1-based (i, j) entries. Each unordered pair may be given
        in either order; giving both orders requires them to be negatives.
        Omitted entries are 0.
        """
        n = ambient.n
        matrix = [[zero(n) for _ in range(n)] for _ in range(n)]
        seen: dict[frozenset[int], IndexPair] = {}
        for (i, j), value in sorted(entries.items()):
            if not (1 <= i <= n and 1 <= j <= n):
                raise DimensionMismatchError(f"component pi^{i}{j} outside {ambient}")
            if i == j:
                if not value.is_zero:
                    raise AntisymmetryError(f"diagonal component pi^{i}{i} = {value} is not 0")
                continue
            key = frozenset((i, j))
            if key in seen:
                previous = seen[key]
                if previous == (i, j) or not canonicalize(
                    matrix[i - 1][j - 1] - value
                ).is_zero:
                    raise AntisymmetryError(
                        f"pi^{previous[0]}{previous[1]} and pi^{i}{j} are not antisymmetric"
                    )
                continue
            seen[key] = (i, j)
            matrix[i - 1][j - 1] = value
            matrix[j - 1][i - 1] = -value
        return cls(ambient, tuple(tuple(row) for row in matrix))

    @property
    def dimension(self) -> int:
        return self.ambient.n

    def component(self, i: int, j: int) -> Expr:
        """pi^ij with 1-based indices."""
        return self.components[i - 1][j - 1]

    @property
    def is_constant(self) -> bool:
        return all(entry.node.is_number for row in self.components for entry in row)

    def __str__(self) -> str:
        entries = [
            f"{i + 1},{j + 1}: {self.components[i][j]}"
            for i, j in itertools.combinations(range(self.dimension), 2)
            if not self.components[i][j].is_zero
        ]
        return "{" + ", ".join(entries) + "}"


@dataclass(slots=True, frozen=True)
class SchoutenTensor:
    """Components T^ijk of [pi, pi] for i < j < k (1-based)."""

    components: Mapping[IndexTriple, Expr] = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        return all(component.is_zero for component in self.components.values())

    def nonzero(self) -> dict[IndexTriple, Expr]:
        return {
            triple: component
            for triple, component in self.components.items()
            if not component.is_zero
        }


@dataclass(slots=True, frozen=True)
class JacobiReport:
    verdict: JacobiVerdict
    defects: Mapping[IndexTriple, Expr] = field(default_factory=dict)
    values: Mapping[IndexTriple, tuple[float, ...]] = field(default_factory=dict)
    worst_defect: float = 0.0

    @property
    def holds(self) -> bool:
        return self.verdict is not JacobiVerdict.FAILED

    def describe(self) -> str:
        if self.verdict is JacobiVerdict.PROVEN_ZERO:
            return f"{self.verdict} ({len(self.defects)} coordinate triples)"
        return f"{self.verdict}, worst defect {format_real(self.worst_defect)}"


def _check_dimensions(pi: BivectorField, *functions: Expr) -> None:
    for function in functions:
        if function.dimension != pi.dimension:
            raise DimensionMismatchError(
                f"{function} has dimension {function.dimension}, bivector has {pi.dimension}"
            )


def bracket(f: Expr, g: Expr, pi: BivectorField) -> Expr:
    """{F, G} as the full double sum over (i, j), canonicalized."""
    _check_dimensions(pi, f, g)
    n = pi.dimension
    df = [differentiate(f, index) for index in range(1, n + 1)]
    dg = [differentiate(g, index) for index in range(1, n + 1)]
    total = zero(n)
    for i, j in itertools.product(range(n), repeat=2):
        entry = pi.components[i][j]
        if entry.node == 0 or df[i].node == 0 or dg[j].node == 0:
            continue
        total = total + entry * df[i] * dg[j]
    return canonicalize(total)


def jacobi_defect(f: Expr, g: Expr, h: Expr, pi: BivectorField) -> Expr:
    """{F,{G,H}} + {G,{H,F}} + {H,{F,G}}."""
    return canonicalize(
        bracket(f, bracket(g, h, pi), pi)
        + bracket(g, bracket(h, f, pi), pi)
        + bracket(h, bracket(f, g, pi), pi)
    )


def _triples(n: int) -> list[IndexTriple]:
    return [(i, j, k) for i, j, k in itertools.combinations(range(1, n + 1), 3)]


def schouten_self(pi: BivectorField) -> SchoutenTensor:
    """
    T^ijk = sum_l (pi^li d_l pi^jk + pi^lj d_l pi^ki + pi^lk d_l pi^ij).
    With this normalization T^ijk = SCHOUTEN_JACOBI_SIGN * jacobi_defect(x_i, x_j, x_k).
    """
    n = pi.dimension
    derivatives = {
        (m, a, b): differentiate(pi.component(a, b), m)
        for m in range(1, n + 1)
        for a in range(1, n + 1)
        for b in range(1, n + 1)
    }
    components = {}
    for i, j, k in _triples(n):
        total = zero(n)
        for m in range(1, n + 1):
            total = (
                total
                + pi.component(m, i) * derivatives[(m, j, k)]
                + pi.component(m, j) * derivatives[(m, k, i)]
                + pi.component(m, k) * derivatives[(m, i, j)]
            )
        components[(i, j, k)] = canonicalize(total)
    return SchoutenTensor(components)


def coordinate_defects(pi: BivectorField) -> dict[IndexTriple, Expr]:
    n = pi.dimension
    return {
        (i, j, k): jacobi_defect(variable(i, n), variable(j, n), variable(k, n), pi)
        for i, j, k in _triples(n)
    }


def check_poisson(
    pi: BivectorField, settings: VerificationSettings = DEFAULT_SETTINGS
) -> JacobiReport:
    """
    Proven zero when the Schouten self-bracket and every coordinate-triple
    defect vanish canonically; otherwise the defects are sampled at the
    seeded interior points of the default window.
    """
    if pi.dimension < 3:
        return JacobiReport(JacobiVerdict.PROVEN_ZERO)
    defects = coordinate_defects(pi)
    if schouten_self(pi).is_zero and all(defect.is_zero for defect in defects.values()):
        return JacobiReport(JacobiVerdict.PROVEN_ZERO, defects)

    points = sample_points((default_bounds(pi.dimension, pi.ambient.k),), settings)
    values = {triple: sample_values(defect, points) for triple, defect in defects.items()}
    worst = max((abs(value) for row in values.values() for value in row), default=0.0)
    verdict = JacobiVerdict.SAMPLED_ZERO if worst <= settings.tolerance else JacobiVerdict.FAILED
    return JacobiReport(verdict, defects, values, worst)


def check_leibniz(
    pi: BivectorField,
    f: Expr,
    g: Expr,
    s: Expr,
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> bool:
    """{f, g s} = {f, g} s + g {f, s}."""
    lhs = bracket(f, g * s, pi)
    rhs = bracket(f, g, pi) * s + g * bracket(f, s, pi)
    return expr_equal(lhs, rhs, settings=settings)


def check_antisymmetry(
    pi: BivectorField,
    pairs: Sequence[tuple[Expr, Expr]],
) -> list[str]:
    """Pairs whose brackets do not cancel; also requires {F, F} = 0."""
    failures = []
    for f, g in pairs:
        if not canonicalize(bracket(f, g, pi) + bracket(g, f, pi)).is_zero:
            failures.append(f"{{{f}, {g}}} + {{{g}, {f}}} != 0")
        if not bracket(f, f, pi).is_zero:
            failures.append(f"{{{f}, {f}}} != 0")
    return failures


def check_bilinearity(
    pi: BivectorField,
    triples: Sequence[tuple[Expr, Expr, Expr]],
    scalars: tuple[Fraction, Fraction] = (Fraction(2), Fraction(-1, 3)),
) -> list[str]:
    """{aF + bH, G} = a{F,G} + b{H,G} canonically, for rational a and b."""
    a, b = scalars
    failures = []
    for f, g, h in triples:
        lhs = bracket(f * a + h * b, g, pi)
        rhs = bracket(f, g, pi) * a + bracket(h, g, pi) * b
        if not canonicalize(lhs - rhs).is_zero:
            failures.append(f"{f}, {g}, {h}")
    return failures


@dataclass(slots=True, frozen=True)
class BracketMorphism:
    """
    The bracket as a family of operations O(U) x O(U) -> O(U). A well-formed
    bracket uses one bivector everywhere; `overrides` swaps it on single
    opens.
    """

    pi: BivectorField
    overrides: Mapping[OpenName, BivectorField] = field(default_factory=dict)

    def on(self, u: OpenName) -> BivectorField:
        return self.overrides.get(u, self.pi)

    def apply(self, u: OpenName, f: Section, g: Section) -> Section:
        return Section(bracket(f.expr, g.expr, self.on(u)), u)


def bracket_sheaf_morphism_check(
    pi: BivectorField | BracketMorphism,
    p: FunctionPresheaf,
    probes: Sequence[Section],
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> tuple[Finding, ...]:
    """
    {f, g}|_V = {f|_V, g|_V} for every V <= U and probe pair over U, plus
    additivity of the bracket on each open.
    """
    morphism = pi if isinstance(pi, BracketMorphism) else BracketMorphism(pi)
    if morphism.pi.ambient != p.ambient:
        raise DimensionMismatchError(
            f"bivector on {morphism.pi.ambient}, presheaf on {p.ambient}"
        )
    findings = []
    lattice = p.lattice
    for u in lattice.nonempty_names:
        over_u = [probe for probe in probes if probe.domain == u]
        pairs = list(itertools.combinations(over_u, 2))
        if not pairs:
            continue
        for v in lattice.below(u):
            failures = [
                (f, g)
                for f, g in pairs
                if not p.agree(
                    p.restrict(morphism.apply(u, f, g), v),
                    morphism.apply(v, p.restrict(f, v), p.restrict(g, v)),
                    settings,
                )
            ]
            detail = f"{len(pairs)} probe pairs"
            if failures:
                f, g = failures[0]
                detail = f"restriction does not commute with {{{f.expr}, {g.expr}}}"
            findings.append(
                Finding.verdict("bracket-restriction", f"{v}<={u}", not failures, detail)
            )
        bilinear = check_bilinearity(
            morphism.on(u),
            [(f.expr, g.expr, h.expr) for f, g, h in itertools.combinations(over_u, 3)],
        )
        findings.append(
            Finding.verdict(
                "bracket-bilinear",
                u,
                not bilinear,
                f"fails for {bilinear[0]}" if bilinear else f"{len(over_u)} probes",
            )
        )
    if not findings:
        findings.append(
            Finding("bracket-restriction", "lattice", Status.WARN, "no probe pairs (vacuous)")
        )
    return tuple(findings)


def schouten_jacobi_agreement(
    pi: BivectorField, settings: VerificationSettings = DEFAULT_SETTINGS
) -> tuple[Finding, ...]:
    """
    Per coordinate triple: T^ijk vanishes iff the Jacobi defect does, and
    T^ijk = SCHOUTEN_JACOBI_SIGN * jacobi_defect(x_i, x_j, x_k) on samples.
    """
    tensor = schouten_self(pi)
    defects = coordinate_defects(pi)
    if not defects:
        return (
            Finding("schouten-jacobi", "pi", Status.PASS, "no index triples (vacuous)"),
        )
    boxes = (default_bounds(pi.dimension, pi.ambient.k),)
    findings = []
    for triple, defect in defects.items():
        component = tensor.components[triple]
        subject = "".join(str(index) for index in triple)
        if component.is_zero != defect.is_zero:
            findings.append(
                Finding(
                    "schouten-jacobi",
                    subject,
                    Status.FAIL,
                    f"T = {component} but defect = {defect}",
                )
            )
            continue
        verdict = compare(component, defect * SCHOUTEN_JACOBI_SIGN, boxes, settings)
        findings.append(
            Finding.verdict("schouten-jacobi", subject, verdict.holds, str(verdict))
        )
    return tuple(findings)
