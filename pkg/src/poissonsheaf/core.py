from __future__ import annotations

import dataclasses
import itertools
from collections.abc import Iterable

import numpy as np
from tqdm import tqdm

from poissonsheaf.console import warning
from poissonsheaf.constants import BRACKET_PAIR_COUNT
from poissonsheaf.constants import JACOBI_POLYNOMIAL_DEGREE
from poissonsheaf.constants import JACOBI_TRIPLE_COUNT
from poissonsheaf.constants import LEIBNIZ_TRIPLE_COUNT
from poissonsheaf.constants import PROBES_PER_OPEN
from poissonsheaf.constants import RANDOM_POLYNOMIAL_DEGREE
from poissonsheaf.constants import RANDOM_POLYNOMIAL_TERMS
from poissonsheaf.corners import CornerConfigurationError
from poissonsheaf.corners import TransversalityError
from poissonsheaf.corners import boundary_decomposition_count
from poissonsheaf.corners import check_fibre_square
from poissonsheaf.corners import fibre_product_carrier_samples
from poissonsheaf.corners import fibre_product_dim
from poissonsheaf.definitions import DEFAULT_SETTINGS
from poissonsheaf.definitions import Finding
from poissonsheaf.definitions import JacobiVerdict
from poissonsheaf.definitions import PoissonSheafError
from poissonsheaf.definitions import ReportDocument
from poissonsheaf.definitions import Status
from poissonsheaf.definitions import VerificationSettings
from poissonsheaf.expr import Expr
from poissonsheaf.expr import default_bounds
from poissonsheaf.expr import format_point
from poissonsheaf.expr import format_real
from poissonsheaf.expr import random_polynomial
from poissonsheaf.expr import sample_points
from poissonsheaf.expr import sample_values
from poissonsheaf.expr import variable
from poissonsheaf.expr import zero
from poissonsheaf.manifest import Manifest
from poissonsheaf.manifest import ManifestError
from poissonsheaf.poisson import BivectorField
from poissonsheaf.poisson import BracketMorphism
from poissonsheaf.poisson import bracket
from poissonsheaf.poisson import bracket_sheaf_morphism_check
from poissonsheaf.poisson import check_antisymmetry
from poissonsheaf.poisson import check_bilinearity
from poissonsheaf.poisson import check_leibniz
from poissonsheaf.poisson import check_poisson
from poissonsheaf.poisson import jacobi_defect
from poissonsheaf.poisson import schouten_jacobi_agreement
from poissonsheaf.poisson import schouten_self
from poissonsheaf.sheaf import CoverError
from poissonsheaf.sheaf import GluingError
from poissonsheaf.sheaf import OverlapMismatchError
from poissonsheaf.sheaf import Section
from poissonsheaf.sheaf import check_equalizer
from poissonsheaf.sheaf import check_functoriality
from poissonsheaf.sheaf import check_local_ring
from poissonsheaf.sheaf import check_locality
from poissonsheaf.sheaf import check_morphism_square
from poissonsheaf.sheaf import check_presheaf_composition
from poissonsheaf.sheaf import check_restriction_homomorphism
from poissonsheaf.sheaf import germ_at
from poissonsheaf.sheaf import glue
from poissonsheaf.sheaf import in_maximal_ideal
from poissonsheaf.sheaf import residue
from poissonsheaf.sheaf import stalkwise_iso_check
from poissonsheaf.typehints import Point


def probe_sections(manifest: Manifest, rng: np.random.Generator) -> list[Section]:
    """Declared sections followed by seeded random polynomials on every nonempty open."""
    probes = [manifest.sections[name] for name in sorted(manifest.sections)]
    for name in manifest.lattice.nonempty_names:
        for _ in range(PROBES_PER_OPEN):
            polynomial = random_polynomial(
                rng, manifest.space.n, RANDOM_POLYNOMIAL_DEGREE, RANDOM_POLYNOMIAL_TERMS
            )
            probes.append(Section(polynomial, name))
    return probes


def _prefixed(name: str, findings: Iterable[Finding]) -> list[Finding]:
    return [dataclasses.replace(finding, subject=f"{name}:{finding.subject}") for finding in findings]


def _gluing_finding(manifest: Manifest, name: str, settings: VerificationSettings) -> Finding:
    gluing = manifest.gluings[name]
    cover = manifest.covers[gluing.cover]
    parts = [manifest.sections[part] for part in gluing.parts]
    try:
        glued = glue(manifest.presheaf, cover.members, cover.open, parts, settings)
    except (OverlapMismatchError, GluingError) as exc:
        return Finding.verdict("gluing", name, gluing.expect == "reject", f"rejected: {exc}")
    return Finding.verdict("gluing", name, gluing.expect == "glue", f"glued to {glued.expr} on {cover.open}")


def run_sheaf_battery(
    manifest: Manifest, settings: VerificationSettings = DEFAULT_SETTINGS
) -> ReportDocument:
    """Composition, ring, locality, gluing, equalizer and pullback checks for one manifest."""
    lattice = manifest.lattice
    presheaf = manifest.presheaf
    if not lattice.nonempty_names:
        warning("the manifest declares no nonempty opens; sheaf checks are vacuous")
        return ReportDocument(
            "check-sheaf", (Finding("lattice", "lattice", Status.WARN, "empty lattice (vacuous)"),)
        )

    rng = np.random.default_rng(settings.seed)
    probes = probe_sections(manifest, rng)
    findings: list[Finding] = []
    findings.extend(check_presheaf_composition(presheaf, probes, settings))
    findings.extend(check_restriction_homomorphism(presheaf, probes, settings))

    for name in sorted(manifest.covers):
        cover = manifest.covers[name]
        over_open = [probe for probe in probes if probe.domain == cover.open]
        candidates = [Section(zero(manifest.space.n), cover.open), *over_open]
        try:
            local = all(
                check_locality(presheaf, cover.members, cover.open, s, settings) for s in candidates
            )
            findings.append(
                Finding.verdict("locality", name, local, f"{len(candidates)} sections")
            )
            findings.extend(
                _prefixed(name, check_equalizer(presheaf, cover.open, cover.members, over_open, settings))
            )
        except CoverError as exc:
            findings.append(Finding("cover", name, Status.FAIL, str(exc)))

    for name in sorted(manifest.gluings):
        findings.append(_gluing_finding(manifest, name, settings))

    for name in sorted(manifest.morphisms):
        declared = manifest.morphisms[name]
        findings.extend(_prefixed(name, check_morphism_square(declared.morphism, probes, settings)))

    sound = [name for name in sorted(manifest.morphisms) if not manifest.morphisms[name].corrupted]
    for first, second in itertools.permutations(sound, 2):
        outer, inner = manifest.morphisms[first], manifest.morphisms[second]
        composite = inner.mapping.compose(outer.mapping)
        findings.append(
            Finding.verdict(
                "pullback-functorial",
                f"{first}.{second}",
                check_functoriality(outer.morphism, inner.morphism, composite, probes, settings),
                f"({inner.map_name} o {outer.map_name})_# on {len(probes)} probes",
            )
        )
    return ReportDocument("check-sheaf", tuple(findings))


def _require_pi(manifest: Manifest) -> BivectorField:
    if manifest.pi is None:
        raise ManifestError(f"{manifest.path}: the manifest declares no bivector 'pi'")
    return manifest.pi


def _random_polynomials(rng: np.random.Generator, n: int, count: int, degree: int) -> list[Expr]:
    return [random_polynomial(rng, n, degree, RANDOM_POLYNOMIAL_TERMS) for _ in range(count)]


def run_poisson_battery(
    manifest: Manifest, settings: VerificationSettings = DEFAULT_SETTINGS
) -> ReportDocument:
    """Antisymmetry, bilinearity, Leibniz, Jacobi, Schouten and restriction checks of the bracket."""
    pi = _require_pi(manifest)
    n = pi.dimension
    rng = np.random.default_rng(settings.seed)
    findings: list[Finding] = []

    first = _random_polynomials(rng, n, BRACKET_PAIR_COUNT, RANDOM_POLYNOMIAL_DEGREE)
    second = _random_polynomials(rng, n, BRACKET_PAIR_COUNT, RANDOM_POLYNOMIAL_DEGREE)
    pairs = list(zip(first, second, strict=True))
    failures = check_antisymmetry(pi, pairs)
    findings.append(
        Finding.verdict(
            "antisymmetry", "pi", not failures, failures[0] if failures else f"{len(pairs)} random pairs"
        )
    )
    triples = [(f, g, first[(index + 1) % len(first)]) for index, (f, g) in enumerate(pairs)]
    failures = check_bilinearity(pi, triples)
    findings.append(
        Finding.verdict(
            "bilinearity", "pi", not failures, failures[0] if failures else f"{len(triples)} random triples"
        )
    )

    leibniz_failures = 0
    for _ in tqdm(range(LEIBNIZ_TRIPLE_COUNT), desc="Leibniz", disable=None, leave=False):
        f, g, s = _random_polynomials(rng, n, 3, RANDOM_POLYNOMIAL_DEGREE)
        if not check_leibniz(pi, f, g, s, settings):
            leibniz_failures += 1
    findings.append(
        Finding.verdict(
            "leibniz",
            "pi",
            not leibniz_failures,
            f"{LEIBNIZ_TRIPLE_COUNT - leibniz_failures}/{LEIBNIZ_TRIPLE_COUNT} random triples",
        )
    )

    jacobi = check_poisson(pi, settings)
    if jacobi.verdict is JacobiVerdict.SAMPLED_ZERO:
        warning("Jacobi identity holds on samples only; no symbolic proof")
    findings.append(Finding.verdict("jacobi", "pi", jacobi.holds, jacobi.describe()))

    tensor = schouten_self(pi)
    nonzero = tensor.nonzero()
    if nonzero:
        (i, j, k), component = next(iter(sorted(nonzero.items())))
        detail = f"T^{i}{j}{k} = {component}"
    elif pi.is_constant:
        detail = "trivially zero (constant coefficients)"
    else:
        detail = f"zero ({len(tensor.components)} components)"
    findings.append(Finding.verdict("schouten", "pi", not nonzero, detail))
    findings.extend(schouten_jacobi_agreement(pi, settings))
    findings.append(_random_jacobi_finding(pi, jacobi.verdict, rng, settings))

    if manifest.lattice.nonempty_names:
        probes = probe_sections(manifest, rng)
        morphism = BracketMorphism(pi, manifest.pi_overrides)
        findings.extend(bracket_sheaf_morphism_check(morphism, manifest.presheaf, probes, settings))
    return ReportDocument("check-poisson", tuple(findings))


def _random_jacobi_finding(
    pi: BivectorField,
    verdict: JacobiVerdict,
    rng: np.random.Generator,
    settings: VerificationSettings,
) -> Finding:
    if verdict is not JacobiVerdict.PROVEN_ZERO:
        return Finding(
            "jacobi-random", "pi", Status.WARN, "skipped: coordinate-triple defects do not vanish"
        )
    points = sample_points((default_bounds(pi.dimension, pi.ambient.k),), settings)
    worst = 0.0
    for _ in tqdm(range(JACOBI_TRIPLE_COUNT), desc="Jacobi", disable=None, leave=False):
        f, g, h = _random_polynomials(rng, pi.dimension, 3, JACOBI_POLYNOMIAL_DEGREE)
        values = sample_values(jacobi_defect(f, g, h, pi), points)
        worst = max([worst, *(abs(value) for value in values)])
    return Finding.verdict(
        "jacobi-random",
        "pi",
        worst <= settings.tolerance,
        f"{JACOBI_TRIPLE_COUNT} random triples, worst defect {format_real(worst)}",
    )


def run_bracket(manifest: Manifest, f_name: str, g_name: str) -> Expr:
    """Canonical {f, g} of two named sections."""
    pi = _require_pi(manifest)
    return bracket(manifest.section(f_name).expr, manifest.section(g_name).expr, pi)


def run_fibre(
    manifest: Manifest, name: str, settings: VerificationSettings = DEFAULT_SETTINGS
) -> ReportDocument:
    """Dimension, transversality and boundary decomposition of one declared fibre product."""
    try:
        d = manifest.fibre_products[name]
    except KeyError:
        raise ManifestError(f"{manifest.path}: unknown fibre product {name!r}") from None
    findings: list[Finding] = []
    try:
        dimension = fibre_product_dim(d)
    except PoissonSheafError as exc:
        findings.append(Finding("fibre-dim", name, Status.FAIL, str(exc)))
        return ReportDocument("fibre", tuple(findings))
    findings.append(Finding("fibre-dim", name, Status.PASS, f"dim {dimension}"))

    try:
        decomposition = boundary_decomposition_count(d, settings)
    except CornerConfigurationError as exc:
        findings.append(Finding("boundary-decomposition", name, Status.FAIL, f"rejected: {exc}"))
        return ReportDocument("fibre", tuple(findings))
    except TransversalityError as exc:
        findings.append(Finding("transversality", name, Status.FAIL, str(exc)))
        return ReportDocument("fibre", tuple(findings))

    carrier = fibre_product_carrier_samples(d)
    findings.append(
        Finding("transversality", name, Status.PASS, f"transverse on {len(carrier)} carrier samples")
    )
    findings.append(
        Finding.verdict(
            "boundary-decomposition", name, decomposition.matches, decomposition.describe()
        )
    )
    rng = np.random.default_rng(settings.seed)
    probes = [variable(index, d.z.n) for index in range(1, d.z.n + 1)]
    probes.append(random_polynomial(rng, d.z.n, 2, RANDOM_POLYNOMIAL_TERMS))
    findings.extend(_prefixed(name, check_fibre_square(d, probes, settings)))
    return ReportDocument("fibre", tuple(findings))


def run_stalk(
    manifest: Manifest,
    section_name: str,
    point: Point,
    morphism_name: str | None = None,
    settings: VerificationSettings = DEFAULT_SETTINGS,
) -> ReportDocument:
    """Residue and maximal-ideal membership of a germ, the local-ring checks at its base point
    and, optionally, the induced stalk map of a declared pullback."""
    presheaf = manifest.presheaf
    germ = germ_at(presheaf, manifest.section(section_name), point)
    subject = f"{section_name}@{format_point(germ.base_point)}"
    findings = [
        Finding("residue", subject, Status.PASS, format_real(residue(germ))),
        Finding(
            "maximal-ideal",
            subject,
            Status.PASS,
            "in m" if in_maximal_ideal(germ) else "not in m (unit)",
        ),
    ]
    germs = [
        germ_at(presheaf, manifest.sections[name], point)
        for name in sorted(manifest.sections)
        if manifest.lattice.region(manifest.sections[name].domain).contains(point)
    ]
    findings.extend(check_local_ring(presheaf, germs, settings))

    if morphism_name is not None:
        try:
            declared = manifest.morphisms[morphism_name]
        except KeyError:
            raise ManifestError(f"{manifest.path}: unknown morphism {morphism_name!r}") from None
        morphism = declared.morphism
        image = declared.mapping(germ.base_point)
        probes = [
            germ_at(presheaf, section, image)
            for _, section in sorted(manifest.sections.items())
            if manifest.lattice.region(section.domain).contains(image)
            and manifest.lattice.region(morphism.preimages[section.domain]).contains(germ.base_point)
        ]
        verdict = stalkwise_iso_check(morphism, germ.base_point, probes, germs, settings)
        findings.append(
            Finding.verdict(
                "stalk-iso",
                f"{morphism_name}@{format_point(germ.base_point)}",
                verdict.is_isomorphism,
                verdict.describe(),
            )
        )
    return ReportDocument("stalk", tuple(findings))


def run_directed(
    manifest: Manifest, settings: VerificationSettings = DEFAULT_SETTINGS
) -> ReportDocument:
    """Every battery the manifest's `checks` list names, or all that apply when it is empty."""
    checks = set(manifest.checks)
    if not checks:
        if manifest.lattice.nonempty_names:
            checks.add("sheaf")
        if manifest.pi is not None:
            checks.add("poisson")
        if manifest.fibre_products:
            checks.add("fibre")
    findings: list[Finding] = []
    if "sheaf" in checks:
        findings.extend(run_sheaf_battery(manifest, settings).findings)
    if "poisson" in checks:
        findings.extend(run_poisson_battery(manifest, settings).findings)
    if "fibre" in checks:
        for name in sorted(manifest.fibre_products):
            findings.extend(run_fibre(manifest, name, settings).findings)
    return ReportDocument("check", tuple(findings))
