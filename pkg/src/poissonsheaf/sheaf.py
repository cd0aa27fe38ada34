"""
Finite, checkable presheaves of smooth functions on a model space.

The topology is a finite intersection-closed lattice of named box regions.
Sections are expressions carried on an open; restriction keeps the
expression and shrinks the domain (plus an optional per-inclusion offset,
which exists only to build deliberately broken presheaves).
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from fractions import Fraction

import sympy

from poissonsheaf.constants import EMPTY_OPEN
from poissonsheaf.constants import INTERSECTION_SEPARATOR
from poissonsheaf.corners import ModelSpace
from poissonsheaf.corners import Region
from poissonsheaf.corners import SmoothMapDesc
from poissonsheaf.definitions import DEFAULT_SETTINGS
from poissonsheaf.definitions import Finding
from poissonsheaf.definitions import PoissonSheafError
from poissonsheaf.definitions import Status
from poissonsheaf.definitions import VerificationSettings
from poissonsheaf.expr import Expr
from poissonsheaf.expr import EvaluationError
from poissonsheaf.expr import canonicalize
from poissonsheaf.expr import compare
from poissonsheaf.expr import constant
from poissonsheaf.expr import evaluate
from poissonsheaf.expr import format_point
from poissonsheaf.expr import reals_agree
from poissonsheaf.expr import variables
from poissonsheaf.expr import zero
from poissonsheaf.typehints import OpenName
from poissonsheaf.typehints import Point
from poissonsheaf.typehints import Real


class LatticeError(PoissonSheafError):
    """Unknown open or geometrically inconsistent lattice."""


class InclusionError(PoissonSheafError):
    """Restriction along a pair of opens that are not nested."""


class CoverError(PoissonSheafError):
    """Declared cover does not cover its open."""


class OverlapMismatchError(PoissonSheafError):
    """Local sections disagree on an overlap."""

    def __init__(self, first: int, second: int, overlap: OpenName, detail: str) -> None:
        super().__init__(
            f"parts {first} and {second} disagree on overlap {overlap}: {detail}"
        )
        self.first = first
        self.second = second
        self.overlap = overlap


class GluingError(PoissonSheafError):
    """Compatible parts that no single expression restricts to."""


class DomainError(PoissonSheafError):
    """Point or section outside the expected open."""


class BasePointError(PoissonSheafError):
    """Germs based at different points."""


class PreimageError(PoissonSheafError):
    """Missing or inconsistent preimage declaration for a pullback."""


@dataclass(slots=True, frozen=True)
class OpenLattice:
    """Intersection-closed family of named opens ordered by inclusion."""

    ambient: ModelSpace
    regions: Mapping[OpenName, Region]
    order: frozenset[tuple[OpenName, OpenName]]
    meets: Mapping[tuple[OpenName, OpenName], OpenName]

    @classmethod
    def build(
        cls,
        ambient: ModelSpace,
        regions: Mapping[OpenName, Region],
        declared_inclusions: Iterable[tuple[OpenName, OpenName]] = (),
        settings: VerificationSettings = DEFAULT_SETTINGS,
    ) -> OpenLattice:
        """
        Close `regions` under pairwise intersection (synthesizing `A&B`
        opens and the empty open as needed), derive the inclusion order
        from geometry and validate the declared inclusions against it.
        """
        closed: dict[OpenName, Region] = {EMPTY_OPEN: Region.empty(ambient)}
        for name, region in regions.items():
            if region.ambient != ambient:
                raise LatticeError(f"open {name} lives in {region.ambient}, not {ambient}")
            closed[name] = region

        meets: dict[tuple[OpenName, OpenName], OpenName] = {}
        pending = True
        while pending:
            pending = False
            for first, second in itertools.combinations(sorted(closed), 2):
                if (first, second) in meets:
                    continue
                overlap = closed[first].intersection(closed[second])
                name = _find_region(closed, overlap, settings)
                if name is None:
                    name = INTERSECTION_SEPARATOR.join(sorted((first, second)))
                    closed[name] = overlap
                    pending = True
                meets[(first, second)] = meets[(second, first)] = name
        for name in closed:
            meets[(name, name)] = name

        order = frozenset(
            (inner, outer)
            for inner, outer in itertools.product(closed, repeat=2)
            if closed[inner].is_subset(closed[outer], settings)
        )
        for inner, outer in declared_inclusions:
            for name in (inner, outer):
                if name not in closed:
                    raise LatticeError(f"unknown open {name!r} in declared inclusion")
            if (inner, outer) not in order:
                witness = next(
                    (
                        p
                        for p in closed[inner].sample_points(settings)
                        if not closed[outer].contains(p)
                    ),
                    None,
                )
                where = f" at {format_point(witness)}" if witness else ""
                raise LatticeError(
                    f"declared inclusion {inner} <= {outer} contradicted by geometry{where}"
                )
        return cls(ambient, closed, order, meets)

    @property
    def names(self) -> tuple[OpenName, ...]:
        """All opens in lexicographic order, the empty open included."""
        return tuple(sorted(self.regions))

    @property
    def nonempty_names(self) -> tuple[OpenName, ...]:
        return tuple(name for name in self.names if not self.regions[name].is_empty)

    @property
    def tops(self) -> tuple[OpenName, ...]:
        """Maximal nonempty opens."""
        names = self.nonempty_names
        return tuple(
            name
            for name in names
            if not any(
                other != name and self.includes(name, other) and not self.includes(other, name)
                for other in names
            )
        )

    def region(self, name: OpenName) -> Region:
        try:
            return self.regions[name]
        except KeyError:
            raise LatticeError(f"unknown open {name!r}") from None

    def _require(self, *names: OpenName) -> None:
        for name in names:
            self.region(name)

    def includes(self, inner: OpenName, outer: OpenName) -> bool:
        """inner <= outer."""
        self._require(inner, outer)
        return (inner, outer) in self.order

    def meet(self, first: OpenName, second: OpenName) -> OpenName:
        self._require(first, second)
        return self.meets[(first, second)]

    def below(self, outer: OpenName) -> tuple[OpenName, ...]:
        """Nonempty opens strictly below `outer`."""
        return tuple(
            name
            for name in self.nonempty_names
            if name != outer and self.includes(name, outer)
        )

    def chains(self) -> list[tuple[OpenName, OpenName, OpenName]]:
        """Every chain W <= V <= U of three distinct nonempty opens."""
        return [
            (w, v, u)
            for u in self.nonempty_names
            for v in self.below(u)
            for w in self.below(v)
            if w != u
        ]

    def opens_containing(self, p: Point) -> tuple[OpenName, ...]:
        return tuple(name for name in self.nonempty_names if self.regions[name].contains(p))


def _find_region(
    regions: Mapping[OpenName, Region], target: Region, settings: VerificationSettings
) -> OpenName | None:
    if target.is_empty:
        return EMPTY_OPEN
    for name in sorted(regions):
        if not regions[name].is_empty and regions[name].same_as(target, settings):
            return name
    return None


@dataclass(slots=True, frozen=True)
class Section:
    """An expression carried on a named open."""

    expr: Expr
    domain: OpenName

    def __str__(self) -> str:
        return f"{self.expr} on {self.domain}"


def restrict(s: Section, v: OpenName, lattice: OpenLattice) -> Section:
    """Formal restriction s|_V; the empty open carries only the zero section."""
    if not lattice.includes(v, s.domain):
        raise InclusionError(f"{v} is not contained in {s.domain}")
    if lattice.region(v).is_empty:
        return Section(zero(s.expr.dimension), v)
    return Section(s.expr, v)


@dataclass(slots=True, frozen=True)
class FunctionPresheaf:
    """
    The structure presheaf O(U) = C∞(U) on a lattice. `restriction_offsets`
    maps (U, V) to an expression added by p^U_V; a well-formed structure
    sheaf has none.
    """

    lattice: OpenLattice
    restriction_offsets: Mapping[tuple[OpenName, OpenName], Expr] = field(
        default_factory=dict
    )

    @property
    def ambient(self) -> ModelSpace:
        return self.lattice.ambient

    def boxes(self, name: OpenName) -> tuple:
        return self.lattice.region(name).boxes

    def restrict(self, s: Section, v: OpenName) -> Section:
        restricted = restrict(s, v, self.lattice)
        offset = self.restriction_offsets.get((s.domain, v))
        if offset is None or self.lattice.region(v).is_empty:
            return restricted
        return Section(restricted.expr + offset, v)

    def agree(
        self,
        a: Section,
        b: Section,
        settings: VerificationSettings = DEFAULT_SETTINGS,
    ) -> bool:
        """Sections over the same open are equal there."""
        if a.domain != b.domain:
            raise DomainError(f"sections over {a.domain} and {b.domain}")
        if self.lattice.region(a.domain).is_empty:
            return True
        return compare(a.expr, b.expr, self.boxes(a.domain) or None, settings).holds


def check_presheaf_composition(
    p: FunctionPresheaf,
    sections: Sequence[Section],
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> tuple[Finding, ...]:
    """p^U_W = p^V_W ∘ p^U_V for every chain W <= V <= U and section over U."""
    chains = p.lattice.chains()
    if not chains:
        return (Finding("composition", "lattice", Status.PASS, "no chains (vacuous)"),)
    findings = []
    for w, v, u in chains:
        over_u = [s for s in sections if s.domain == u]
        if not over_u:
            continue
        failures = [
            s
            for s in over_u
            if not p.agree(p.restrict(p.restrict(s, v), w), p.restrict(s, w), settings)
        ]
        detail = f"{len(over_u)} sections"
        if failures:
            detail = f"restriction paths differ for {failures[0].expr}"
        findings.append(
            Finding.verdict("composition", f"{w}<={v}<={u}", not failures, detail)
        )
    if not findings:
        findings.append(
            Finding("composition", "lattice", Status.PASS, "no sections over chain tops (vacuous)")
        )
    return tuple(findings)


def check_restriction_homomorphism(
    p: FunctionPresheaf,
    probes: Sequence[Section],
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> tuple[Finding, ...]:
    """Restriction maps preserve sums, products and the unit."""
    findings = []
    for u in p.lattice.nonempty_names:
        over_u = [s for s in probes if s.domain == u]
        dimension = p.ambient.n
        for v in p.lattice.below(u):
            failures = []
            one = Section(constant(1, dimension), u)
            if not p.agree(p.restrict(one, v), Section(constant(1, dimension), v), settings):
                failures.append("unit")
            for a, b in itertools.combinations(over_u, 2):
                total = p.restrict(Section(a.expr + b.expr, u), v)
                product = p.restrict(Section(a.expr * b.expr, u), v)
                ra, rb = p.restrict(a, v), p.restrict(b, v)
                if not p.agree(total, Section(ra.expr + rb.expr, v), settings):
                    failures.append(f"sum of {a.expr} and {b.expr}")
                if not p.agree(product, Section(ra.expr * rb.expr, v), settings):
                    failures.append(f"product of {a.expr} and {b.expr}")
            detail = failures[0] if failures else f"{len(over_u)} probes"
            findings.append(
                Finding.verdict("restriction-ring", f"{u}->{v}", not failures, detail)
            )
    return tuple(findings)


def _require_cover(
    p: FunctionPresheaf,
    cover: Sequence[OpenName],
    u: OpenName,
    settings: VerificationSettings,
) -> None:
    lattice = p.lattice
    for member in cover:
        if not lattice.includes(member, u):
            raise CoverError(f"cover member {member} is not contained in {u}")
    members = [lattice.region(member) for member in cover]
    for point in lattice.region(u).sample_points(settings):
        if not any(region.contains(point) for region in members):
            raise CoverError(
                f"{format_point(point)} in {u} lies in no member of {{{', '.join(cover)}}}"
            )


def check_locality(
    p: FunctionPresheaf,
    cover: Sequence[OpenName],
    u: OpenName,
    s: Section,
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> bool:
    """If every restriction s|_{U_i} vanishes then s vanishes."""
    _require_cover(p, cover, u, settings)
    dimension = s.expr.dimension
    vanishes_locally = all(
        p.agree(p.restrict(s, member), Section(zero(dimension), member), settings)
        for member in cover
    )
    if not vanishes_locally:
        return True
    return p.agree(s, Section(zero(dimension), u), settings)


def _cover_connected(p: FunctionPresheaf, cover: Sequence[OpenName]) -> bool:
    """Whether the members are linked by a chain of nonempty pairwise overlaps."""
    reached = {0} if cover else set()
    frontier = list(reached)
    while frontier:
        i = frontier.pop()
        for j in range(len(cover)):
            if j not in reached and not p.lattice.region(p.lattice.meet(cover[i], cover[j])).is_empty:
                reached.add(j)
                frontier.append(j)
    return len(reached) == len(cover)


def _mismatch(
    p: FunctionPresheaf,
    cover: Sequence[OpenName],
    parts: Sequence[Section],
    settings: VerificationSettings,
) -> OverlapMismatchError | None:
    for i, j in itertools.combinations(range(len(cover)), 2):
        overlap = p.lattice.meet(cover[i], cover[j])
        if p.lattice.region(overlap).is_empty:
            continue
        left, right = p.restrict(parts[i], overlap), p.restrict(parts[j], overlap)
        if not p.agree(left, right, settings):
            return OverlapMismatchError(
                i, j, overlap, f"{left.expr} vs {right.expr}"
            )
    return None


def glue(
    p: FunctionPresheaf,
    cover: Sequence[OpenName],
    u: OpenName,
    parts: Sequence[Section],
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> Section:
    """The unique section over U restricting to each part, if the parts agree on overlaps."""
    _require_cover(p, cover, u, settings)
    if len(parts) != len(cover):
        raise GluingError(f"{len(parts)} parts for a cover of {len(cover)} opens")
    for index, (member, part) in enumerate(zip(cover, parts, strict=True)):
        if part.domain != member:
            raise DomainError(f"part {index} lives on {part.domain}, expected {member}")
    mismatch = _mismatch(p, cover, parts, settings)
    if mismatch is not None:
        raise mismatch

    first = parts[0]
    offset = p.restriction_offsets.get((u, first.domain))
    candidate = canonicalize(first.expr - offset if offset is not None else first.expr)
    glued = Section(candidate, u)
    for index, (member, part) in enumerate(zip(cover, parts, strict=True)):
        if not p.agree(p.restrict(glued, member), part, settings):
            raise GluingError(
                f"no single expression over {u} restricts to part {index} ({part.expr}); "
                "piecewise sections are not representable"
            )
    return glued


def check_equalizer(
    p: FunctionPresheaf,
    u: OpenName,
    cover: Sequence[OpenName],
    probes: Sequence[Section],
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> tuple[Finding, ...]:
    """
    Exactness of 0 -> F(U) -> prod F(U_i) => prod F(U_i ∩ U_j) on probes:
    restriction to the cover is injective and compatible tuples glue.
    """
    _require_cover(p, cover, u, settings)
    probes = [probe for probe in probes if probe.domain == u]
    restricted = [[p.restrict(probe, member) for member in cover] for probe in probes]

    collisions = []
    for a, b in itertools.combinations(range(len(probes)), 2):
        if p.agree(probes[a], probes[b], settings):
            continue
        if all(
            p.agree(left, right, settings)
            for left, right in zip(restricted[a], restricted[b], strict=True)
        ):
            collisions.append(f"{probes[a].expr} / {probes[b].expr}")
    injective = Finding.verdict(
        "equalizer-injective",
        u,
        not collisions,
        f"collapses {collisions[0]}" if collisions else f"{len(probes)} probes",
    )

    glued = flagged = 0
    failures = []
    unrepresentable = 0
    connected = _cover_connected(p, cover)
    for choice in itertools.product(range(len(probes)), repeat=len(cover)):
        parts = [restricted[probe][slot] for slot, probe in enumerate(choice)]
        if _mismatch(p, cover, parts, settings) is not None:
            flagged += 1
            continue
        try:
            glue(p, cover, u, parts, settings)
            glued += 1
        except GluingError as exc:
            if connected:
                failures.append(str(exc))
            else:
                unrepresentable += 1
    detail = f"{glued} compatible tuples glued, {flagged} incompatible flagged"
    if failures:
        gluing = Finding("equalizer-gluing", u, Status.FAIL, failures[0])
    elif unrepresentable:
        gluing = Finding(
            "equalizer-gluing",
            u,
            Status.WARN,
            f"{detail}, {unrepresentable} piecewise over disconnected members (not representable)",
        )
    else:
        gluing = Finding("equalizer-gluing", u, Status.PASS, detail)
    return injective, gluing


@dataclass(slots=True, frozen=True)
class Germ:
    """Germ [(f, U)] of a section at a base point of its domain."""

    representative: Section
    base_point: Point

    def __str__(self) -> str:
        return f"[{self.representative.expr}]@{format_point(self.base_point)}"


def germ_at(p: FunctionPresheaf, s: Section, x: Point) -> Germ:
    if not p.lattice.region(s.domain).contains(x):
        raise DomainError(f"{format_point(x)} is not in {s.domain}")
    return Germ(s, tuple(x))


def _same_base(a: Germ, b: Germ) -> None:
    if a.base_point != b.base_point:
        raise BasePointError(
            f"germs at {format_point(a.base_point)} and {format_point(b.base_point)}"
        )


def germ_compare(
    p: FunctionPresheaf,
    a: Germ,
    b: Germ,
    settings: VerificationSettings = DEFAULT_SETTINGS,
):
    """Verdict of comparing two germs' representatives near the shared base point."""
    _same_base(a, b)
    overlap = p.lattice.meet(a.representative.domain, b.representative.domain)
    boxes = p.boxes(overlap) or p.boxes(a.representative.domain) or None
    return compare(a.representative.expr, b.representative.expr, boxes, settings)


def germ_equal(
    p: FunctionPresheaf,
    a: Germ,
    b: Germ,
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> bool:
    return germ_compare(p, a, b, settings).holds


def _combine(p: FunctionPresheaf, a: Germ, b: Germ, expr: Expr) -> Germ:
    _same_base(a, b)
    overlap = p.lattice.meet(a.representative.domain, b.representative.domain)
    if not p.lattice.region(overlap).contains(a.base_point):
        raise DomainError(f"{overlap} does not contain {format_point(a.base_point)}")
    return Germ(Section(expr, overlap), a.base_point)


def germ_sum(p: FunctionPresheaf, a: Germ, b: Germ) -> Germ:
    return _combine(p, a, b, a.representative.expr + b.representative.expr)


def germ_product(p: FunctionPresheaf, a: Germ, b: Germ) -> Germ:
    return _combine(p, a, b, a.representative.expr * b.representative.expr)


def residue(g: Germ) -> Real:
    """Image of the germ in the residue field: its value at the base point."""
    return evaluate(g.representative.expr, g.base_point)


def in_maximal_ideal(g: Germ) -> bool:
    return residue(g) == 0


def germ_inverse(p: FunctionPresheaf, g: Germ) -> Germ:
    """
    Inverse of a unit germ, represented by 1/f on the smallest open below
    the representative's domain that contains the base point.
    """
    if in_maximal_ideal(g):
        raise EvaluationError(f"{g} lies in the maximal ideal and has no inverse")
    lattice = p.lattice
    domain = g.representative.domain
    candidates = [
        name
        for name in lattice.opens_containing(g.base_point)
        if lattice.includes(name, domain)
    ]
    smallest = min(
        candidates or [domain],
        key=lambda name: (sum(1 for other in candidates if lattice.includes(other, name)), name),
    )
    inverse = constant(1, g.representative.expr.dimension) / g.representative.expr
    return Germ(Section(inverse, smallest), g.base_point)


def check_local_ring(
    p: FunctionPresheaf,
    germs: Sequence[Germ],
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> tuple[Finding, ...]:
    """
    The stalk is a local ring on the probe germs: residue is a ring
    homomorphism, the maximal ideal is closed under sums and absorbs
    products, and germs outside it are units.
    """
    if not germs:
        return (Finding("local-ring", "stalk", Status.WARN, "no germs (vacuous)"),)
    subject = format_point(germs[0].base_point)
    homomorphism_failures = []
    ideal_failures = []
    for a, b in itertools.product(germs, repeat=2):
        total, product = germ_sum(p, a, b), germ_product(p, a, b)
        ra, rb = residue(a), residue(b)
        if not reals_agree(residue(total), ra + rb, settings) or not reals_agree(
            residue(product), ra * rb, settings
        ):
            homomorphism_failures.append(f"{a} / {b}")
        if in_maximal_ideal(a) and in_maximal_ideal(b) and not in_maximal_ideal(total):
            ideal_failures.append(f"sum {a} + {b}")
        if in_maximal_ideal(a) and not in_maximal_ideal(product):
            ideal_failures.append(f"product {b} * {a}")

    unit_failures = []
    units = [g for g in germs if not in_maximal_ideal(g)]
    for unit in units:
        inverse = germ_inverse(p, unit)
        one = germ_at(p, Section(constant(1, p.ambient.n), inverse.representative.domain), unit.base_point)
        if not germ_equal(p, germ_product(p, unit, inverse), one, settings):
            unit_failures.append(str(unit))

    return (
        Finding.verdict(
            "residue-homomorphism",
            subject,
            not homomorphism_failures,
            homomorphism_failures[0] if homomorphism_failures else f"{len(germs) ** 2} pairs",
        ),
        Finding.verdict(
            "maximal-ideal",
            subject,
            not ideal_failures,
            ideal_failures[0] if ideal_failures else f"{len(germs) - len(units)} germs in m",
        ),
        Finding.verdict(
            "units",
            subject,
            not unit_failures,
            f"no inverse for {unit_failures[0]}" if unit_failures else f"{len(units)} units inverted",
        ),
    )


@dataclass(slots=True, frozen=True)
class SheafMorphismDesc:
    """
    Morphism from `domain` (sections over its opens) to `codomain` (sections
    over the declared preimages). Each component substitutes expressions in
    the codomain's coordinates for the domain's variables.
    """

    domain: FunctionPresheaf
    codomain: FunctionPresheaf
    components: Mapping[OpenName, tuple[Expr, ...]]
    preimages: Mapping[OpenName, OpenName]

    def __post_init__(self) -> None:
        for name in self.domain.lattice.names:
            if name not in self.components or name not in self.preimages:
                raise PreimageError(f"morphism has no component over {name}")

    def apply(self, u: OpenName, s: Section) -> Section:
        if s.domain != u:
            raise DomainError(f"section lives on {s.domain}, not {u}")
        target = self.preimages[u]
        dimension = self.codomain.ambient.n
        if self.codomain.lattice.region(target).is_empty:
            return Section(zero(dimension), target)
        return Section(s.expr.substitute(self.components[u], dimension), target)

    def with_component(self, u: OpenName, images: tuple[Expr, ...]) -> SheafMorphismDesc:
        components = dict(self.components)
        components[u] = images
        return SheafMorphismDesc(self.domain, self.codomain, components, self.preimages)


def identity_morphism(p: FunctionPresheaf) -> SheafMorphismDesc:
    images = SmoothMapDesc.identity(p.ambient).components
    return SheafMorphismDesc(
        p,
        p,
        {name: images for name in p.lattice.names},
        {name: name for name in p.lattice.names},
    )


def _diagonal_preimage(mapping: SmoothMapDesc, region: Region) -> Region | None:
    """Preimage of a box region under x ↦ (a_i x_σ(i) + b_i); None for other maps."""
    if not mapping.is_affine or mapping.source.n != mapping.target.n:
        return None
    linear, offset = mapping.affine_parts()
    permutation: dict[int, int] = {}
    for row_index, row in enumerate(linear):
        nonzero = [column for column, value in enumerate(row) if value != 0]
        if len(nonzero) != 1 or nonzero[0] in permutation.values():
            return None
        permutation[row_index] = nonzero[0]
    boxes = []
    for box in region.boxes:
        bounds: list[tuple[Fraction, Fraction]] = [(Fraction(0), Fraction(0))] * mapping.source.n
        for row_index, column in permutation.items():
            scale, shift = linear[row_index][column], offset[row_index]
            low, high = box[row_index]
            ends = sorted(((low - shift) / scale, (high - shift) / scale))
            if column < mapping.source.k:
                ends[0] = max(ends[0], Fraction(0))
            bounds[column] = (ends[0], ends[1])
        if all(low < high for low, high in bounds):
            boxes.append(tuple(bounds))
    return Region(mapping.source, tuple(boxes))


def pullback_morphism(
    mapping: SmoothMapDesc,
    source: FunctionPresheaf,
    target: FunctionPresheaf,
    declared_preimages: Mapping[OpenName, OpenName] | None = None,
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> SheafMorphismDesc:
    """
    f_#: O_target -> f_* O_source, c ↦ c ∘ f. Preimages of target opens
    are computed for coordinate-wise affine maps and must be declared
    otherwise; declared preimages are checked to map into their open.
    """
    if mapping.source != source.ambient or mapping.target != target.ambient:
        raise PreimageError(
            f"map {mapping.source} -> {mapping.target} does not match "
            f"{source.ambient} -> {target.ambient}"
        )
    declared = dict(declared_preimages or {})
    preimages: dict[OpenName, OpenName] = {EMPTY_OPEN: EMPTY_OPEN}
    for name in target.lattice.nonempty_names:
        region = target.lattice.region(name)
        if name in declared:
            preimage = declared[name]
            for p in source.lattice.region(preimage).sample_points(settings):
                if not region.contains(mapping(p)):
                    raise PreimageError(
                        f"declared preimage {preimage} of {name} maps "
                        f"{format_point(p)} outside {name}"
                    )
            preimages[name] = preimage
            continue
        computed = _diagonal_preimage(mapping, region)
        if computed is None:
            raise PreimageError(f"missing preimage declaration for {name}")
        match = _find_region(source.lattice.regions, computed, settings)
        if match is None:
            raise PreimageError(
                f"no open of the source lattice is the preimage of {name}; declare it"
            )
        preimages[name] = match
    components = {name: mapping.components for name in target.lattice.names}
    return SheafMorphismDesc(target, source, components, preimages)


def compose_morphisms(
    outer: SheafMorphismDesc, inner: SheafMorphismDesc
) -> SheafMorphismDesc:
    """outer ∘ inner; for pullbacks F_# ∘ G_# = (G ∘ F)_#."""
    if inner.codomain.lattice != outer.domain.lattice:
        raise PreimageError("inner morphism does not land where the outer one starts")
    components = {}
    preimages = {}
    dimension = outer.codomain.ambient.n
    for name in inner.domain.lattice.names:
        middle = inner.preimages[name]
        preimages[name] = outer.preimages[middle]
        components[name] = tuple(
            image.substitute(outer.components[middle], dimension)
            for image in inner.components[name]
        )
    return SheafMorphismDesc(inner.domain, outer.codomain, components, preimages)


def check_functoriality(
    outer: SheafMorphismDesc,
    inner: SheafMorphismDesc,
    composite: SmoothMapDesc,
    probes: Sequence[Section],
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> bool:
    """
    outer ∘ inner sends c to c ∘ composite on every probe, i.e.
    F_# ∘ G_# = (G ∘ F)_# when outer = F_#, inner = G_# and composite = G ∘ F.
    """
    composed = compose_morphisms(outer, inner)
    dimension = composed.codomain.ambient.n
    for probe in probes:
        if probe.domain not in composed.components:
            raise DomainError(f"probe lives on unknown open {probe.domain}")
        image = composed.apply(probe.domain, probe)
        if composed.codomain.lattice.region(image.domain).is_empty:
            continue
        expected = probe.expr.substitute(composite.components, dimension)
        boxes = composed.codomain.boxes(image.domain) or None
        if not compare(image.expr, expected, boxes, settings).holds:
            return False
    return True


def check_morphism_square(
    m: SheafMorphismDesc,
    probes: Sequence[Section],
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> tuple[Finding, ...]:
    """m(U)(s)|_{m^-1 V} = m(V)(s|_V) for every V <= U and probe s over U."""
    findings = []
    domain, codomain = m.domain, m.codomain
    for u in domain.lattice.nonempty_names:
        over_u = [s for s in probes if s.domain == u]
        for v in domain.lattice.below(u):
            subject = f"{v}<={u}"
            if not codomain.lattice.includes(m.preimages[v], m.preimages[u]):
                findings.append(
                    Finding(
                        "morphism-square",
                        subject,
                        Status.FAIL,
                        f"preimage {m.preimages[v]} is not inside {m.preimages[u]}",
                    )
                )
                continue
            failures = [
                s
                for s in over_u
                if not codomain.agree(
                    codomain.restrict(m.apply(u, s), m.preimages[v]),
                    m.apply(v, domain.restrict(s, v)),
                    settings,
                )
            ]
            detail = f"{len(over_u)} probes"
            if failures:
                detail = f"square does not commute for {failures[0].expr}"
            findings.append(Finding.verdict("morphism-square", subject, not failures, detail))
    return tuple(findings)


@dataclass(slots=True, frozen=True)
class StalkVerdict:
    """Stalk-map verdict, valid only over the probe germs it was computed from."""

    probe_count: int
    target_count: int
    collisions: tuple[str, ...] = ()
    missing: tuple[str, ...] = ()

    @property
    def injective(self) -> bool:
        return not self.collisions

    @property
    def surjective(self) -> bool:
        return not self.missing

    @property
    def is_isomorphism(self) -> bool:
        return self.injective and self.surjective

    def describe(self) -> str:
        scope = f"over {self.probe_count} probe germs and {self.target_count} target germs"
        if self.is_isomorphism:
            return f"isomorphism {scope}"
        problems = []
        if self.collisions:
            problems.append(f"injectivity fails for {self.collisions[0]}")
        if self.missing:
            problems.append(f"surjectivity fails for {self.missing[0]}")
        return f"not an isomorphism {scope}: " + "; ".join(problems)


def _affine_inverse(images: tuple[Expr, ...], dimension: int) -> tuple[Expr, ...] | None:
    source = ModelSpace(dimension)
    mapping = SmoothMapDesc(source, ModelSpace(len(images)), images)
    if not mapping.is_affine or len(images) != dimension:
        return None
    linear, offset = mapping.affine_parts()
    matrix = sympy.Matrix(linear)
    if matrix.det() == 0:
        return None
    inverse = matrix.inv()
    symbols = sympy.Matrix(variables(dimension))
    solved = inverse * (symbols - sympy.Matrix(offset))
    return tuple(Expr(entry, dimension) for entry in solved)


def stalkwise_iso_check(
    m: SheafMorphismDesc,
    x: Point,
    probes: Sequence[Germ],
    targets: Sequence[Germ] = (),
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> StalkVerdict:
    """
    Induced map on stalks at `x` (a point of the codomain's space), checked
    on probe germs of the domain: distinct probes must stay distinct, and
    every target germ at `x` must be hit by a probe or, for invertible
    affine components, by the inverted substitution.
    """
    x = tuple(x)
    images: list[Germ] = []
    for probe in probes:
        u = probe.representative.domain
        preimage = m.preimages[u]
        if not m.codomain.lattice.region(preimage).contains(x):
            raise DomainError(f"{format_point(x)} is not in {preimage}, the preimage of {u}")
        images.append(Germ(m.apply(u, probe.representative), x))

    collisions = []
    for a, b in itertools.combinations(range(len(probes)), 2):
        if germ_equal(m.domain, probes[a], probes[b], settings):
            continue
        if germ_equal(m.codomain, images[a], images[b], settings):
            collisions.append(f"{probes[a]} / {probes[b]}")

    missing = []
    domains = [u for u in m.domain.lattice.nonempty_names if m.codomain.lattice.region(m.preimages[u]).contains(x)]
    for target in targets:
        if any(germ_equal(m.codomain, image, target, settings) for image in images):
            continue
        if domains and _inverted_preimage_hits(m, domains[0], target, settings):
            continue
        missing.append(str(target))
    return StalkVerdict(len(probes), len(targets), tuple(collisions), tuple(missing))


def _inverted_preimage_hits(
    m: SheafMorphismDesc, u: OpenName, target: Germ, settings: VerificationSettings
) -> bool:
    inverse = _affine_inverse(m.components[u], m.codomain.ambient.n)
    if inverse is None or len(inverse) != m.domain.ambient.n:
        return False
    candidate = Section(
        target.representative.expr.substitute(inverse, m.domain.ambient.n), u
    )
    try:
        image = Germ(m.apply(u, candidate), target.base_point)
        return germ_equal(m.codomain, image, target, settings)
    except EvaluationError:
        return False
