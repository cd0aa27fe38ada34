import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st

from conftest import box
from conftest import load_fixture
from poissonsheaf.constants import DEFAULT_SEED
from poissonsheaf.constants import EMPTY_OPEN
from poissonsheaf.corners import ModelSpace
from poissonsheaf.corners import Region
from poissonsheaf.corners import SmoothMapDesc
from poissonsheaf.definitions import Status
from poissonsheaf.expr import EvaluationError
from poissonsheaf.expr import canonicalize
from poissonsheaf.expr import expr_equal
from poissonsheaf.expr import parse
from poissonsheaf.expr import random_polynomial
from poissonsheaf.sheaf import BasePointError
from poissonsheaf.sheaf import CoverError
from poissonsheaf.sheaf import DomainError
from poissonsheaf.sheaf import FunctionPresheaf
from poissonsheaf.sheaf import GluingError
from poissonsheaf.sheaf import InclusionError
from poissonsheaf.sheaf import LatticeError
from poissonsheaf.sheaf import OpenLattice
from poissonsheaf.sheaf import OverlapMismatchError
from poissonsheaf.sheaf import PreimageError
from poissonsheaf.sheaf import Section
from poissonsheaf.sheaf import check_equalizer
from poissonsheaf.sheaf import check_functoriality
from poissonsheaf.sheaf import check_local_ring
from poissonsheaf.sheaf import check_locality
from poissonsheaf.sheaf import check_morphism_square
from poissonsheaf.sheaf import check_presheaf_composition
from poissonsheaf.sheaf import check_restriction_homomorphism
from poissonsheaf.sheaf import compose_morphisms
from poissonsheaf.sheaf import germ_at
from poissonsheaf.sheaf import germ_equal
from poissonsheaf.sheaf import germ_inverse
from poissonsheaf.sheaf import germ_product
from poissonsheaf.sheaf import germ_sum
from poissonsheaf.sheaf import glue
from poissonsheaf.sheaf import identity_morphism
from poissonsheaf.sheaf import in_maximal_ideal
from poissonsheaf.sheaf import pullback_morphism
from poissonsheaf.sheaf import residue
from poissonsheaf.sheaf import restrict
from poissonsheaf.sheaf import stalkwise_iso_check


R1 = ModelSpace(1)
ORIGIN = (Fraction(0),)


def section(text: str, domain: str, dimension: int = 2) -> Section:
    return Section(parse(text, dimension), domain)


def presheaf(space: ModelSpace, opens: dict, inclusions=()) -> FunctionPresheaf:
    regions = {name: Region(space, (box(*intervals),)) for name, intervals in opens.items()}
    return FunctionPresheaf(OpenLattice.build(space, regions, inclusions))


@pytest.fixture
def line_cover() -> FunctionPresheaf:
    """(0, 3) covered by (0, 2) and (1, 3) in R^1."""
    return presheaf(R1, {"U": [(0, 3)], "A": [(0, 2)], "B": [(1, 3)]})


class TestLattice:
    def test_closed_under_intersection(self, twobox):
        lattice = twobox.lattice
        assert lattice.names == (EMPTY_OPEN, "A", "A&B", "B", "U")
        assert lattice.meet("A", "B") == "A&B"
        assert lattice.meet("A", "U") == "A"
        assert lattice.region("A&B").boxes == (box((1, 2), (-1, 1)),)

    def test_order_from_geometry(self, twobox):
        lattice = twobox.lattice
        assert lattice.includes("A&B", "A")
        assert lattice.includes(EMPTY_OPEN, "A")
        assert not lattice.includes("A", "B")
        assert lattice.tops == ("U",)
        assert ("A&B", "A", "U") in lattice.chains()
        assert set(lattice.below("U")) == {"A", "A&B", "B"}

    def test_disjoint_opens_meet_in_the_empty_open(self):
        p = presheaf(R1, {"A": [(0, 1)], "B": [(2, 3)]})
        assert p.lattice.meet("A", "B") == EMPTY_OPEN
        assert p.lattice.nonempty_names == ("A", "B")

    def test_declared_inclusion_contradicted_by_geometry(self):
        regions = {
            "A": Region(R1, (box((0, 2)),)),
            "B": Region(R1, (box((1, 3)),)),
        }
        with pytest.raises(LatticeError, match="declared inclusion A <= B contradicted by geometry at"):
            OpenLattice.build(R1, regions, [("A", "B")])

    def test_unknown_open(self, twobox):
        with pytest.raises(LatticeError, match="unknown open 'Z'"):
            twobox.lattice.region("Z")

    def test_opens_containing(self, twobox):
        assert twobox.lattice.opens_containing((Fraction(3, 2), Fraction(0))) == ("A", "A&B", "B", "U")


class TestRestriction:
    def test_formal_restriction(self, nested):
        restricted = restrict(section("x1^2", "U", 1), "V", nested.lattice)
        assert restricted == section("x1^2", "V", 1)

    def test_restriction_needs_inclusion(self, twobox):
        with pytest.raises(InclusionError):
            restrict(section("x1^2", "A"), "B", twobox.lattice)

    def test_empty_open_carries_only_zero(self, twobox):
        restricted = twobox.restrict(section("x1 + 5", "A"), EMPTY_OPEN)
        assert restricted.expr.is_zero

    def test_composition_on_three_nested_boxes(self):
        p = presheaf(
            ModelSpace(2),
            {
                "U": [(-3, 3), (-3, 3)],
                "V": [(-2, 2), (-2, 2)],
                "W": [(-1, 1), (-1, 1)],
            },
        )
        findings = check_presheaf_composition(p, [section("x1 + x2", "U")])
        assert [(f.subject, f.status) for f in findings] == [("W<=V<=U", Status.PASS)]

    def test_single_open_is_vacuous(self):
        p = presheaf(R1, {"U": [(0, 1)]})
        (finding,) = check_presheaf_composition(p, [section("x1", "U", 1)])
        assert finding.status is Status.PASS
        assert "vacuous" in finding.detail

    def test_corrupted_restriction_names_the_chain(self, twobox):
        corrupted = FunctionPresheaf(twobox.lattice, {("U", "A"): parse("1", 2)})
        findings = check_presheaf_composition(corrupted, [section("x1*x2", "U")])
        failed = [f.subject for f in findings if f.failed]
        assert failed == ["A&B<=A<=U"]

    def test_restriction_is_a_ring_homomorphism(self, twobox):
        probes = [section("x1 + x2", "U"), section("x1^2", "U"), section("3", "A")]
        findings = check_restriction_homomorphism(twobox, probes)
        assert findings
        assert all(f.status is Status.PASS for f in findings)

    def test_offset_breaks_the_unit(self, twobox):
        corrupted = FunctionPresheaf(twobox.lattice, {("U", "B"): parse("x2", 2)})
        findings = check_restriction_homomorphism(corrupted, [])
        assert [f.detail for f in findings if f.failed] == ["unit"]


class TestLocality:
    @pytest.mark.parametrize("text", ["0", "x1", "x1*0"])
    def test_locality(self, twobox, text):
        assert check_locality(twobox, ["A", "B"], "U", section(text, "U"))

    def test_incomplete_cover(self, twobox):
        with pytest.raises(CoverError, match="lies in no member"):
            check_locality(twobox, ["A"], "U", section("0", "U"))

    def test_cover_members_must_be_inside(self, twobox):
        with pytest.raises(CoverError, match="not contained"):
            check_locality(twobox, ["U"], "A", section("0", "A"))


class TestGluing:
    def test_identical_parts(self, line_cover):
        glued = glue(line_cover, ["A", "B"], "U", [section("x1", "A", 1), section("x1", "B", 1)])
        assert glued == section("x1", "U", 1)

    def test_offset_parts_mismatch_on_the_overlap(self, line_cover):
        with pytest.raises(OverlapMismatchError) as excinfo:
            glue(line_cover, ["A", "B"], "U", [section("x1", "A", 1), section("x1 + 1", "B", 1)])
        assert excinfo.value.overlap == "A&B"
        assert line_cover.lattice.region("A&B").boxes == (box((1, 2)),)

    def test_canonical_forms_glue(self, twobox):
        glued = glue(
            twobox,
            ["A", "B"],
            "U",
            [section("(x1 + x2)^2", "A"), section("x1^2 + 2*x1*x2 + x2^2", "B")],
        )
        assert expr_equal(glued.expr, parse("(x1 + x2)^2", 2))

    def test_parts_must_live_on_their_members(self, twobox):
        with pytest.raises(DomainError):
            glue(twobox, ["A", "B"], "U", [section("x1", "B"), section("x1", "A")])

    def test_piecewise_sections_are_not_representable(self, twobox):
        shifted = FunctionPresheaf(twobox.lattice, {("U", "B"): parse("1", 2)})
        with pytest.raises(GluingError, match="piecewise"):
            glue(shifted, ["A", "B"], "U", [section("x1", "A"), section("x1", "B")])

    @settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_restrictions_of_a_section_glue_back(self, twobox, seed):
        s = Section(random_polynomial(np.random.default_rng(seed), 2, 3, 4), "U")
        parts = [twobox.restrict(s, "A"), twobox.restrict(s, "B")]
        glued = glue(twobox, ["A", "B"], "U", parts)
        assert expr_equal(glued.expr, s.expr)
        assert check_locality(twobox, ["A", "B"], "U", s)


class TestEqualizer:
    def test_two_box_cover(self, twobox):
        probes = [section(text, "U") for text in ("0", "x1", "x1^2")]
        injective, gluing = check_equalizer(twobox, "U", ["A", "B"], probes)
        assert injective.status is Status.PASS
        assert gluing.status is Status.PASS
        assert gluing.detail == "3 compatible tuples glued, 6 incompatible flagged"

    def test_offset_tuple_is_flagged_not_a_counterexample(self, twobox):
        probes = [section("x1", "U"), section("x1 + 1", "U")]
        _, gluing = check_equalizer(twobox, "U", ["A", "B"], probes)
        assert gluing.status is Status.PASS
        assert gluing.detail.endswith("2 incompatible flagged")

    def test_single_member_cover(self, twobox):
        probes = [section(text, "U") for text in ("0", "x1", "x1^2")]
        injective, gluing = check_equalizer(twobox, "U", ["U"], probes)
        assert injective.status is Status.PASS
        assert gluing.detail == "3 compatible tuples glued, 0 incompatible flagged"

    def test_disconnected_open_warns_about_piecewise_tuples(self):
        regions = {
            "U": Region(R1, (box((0, 1)), box((2, 3)))),
            "A": Region(R1, (box((0, 1)),)),
            "B": Region(R1, (box((2, 3)),)),
        }
        p = FunctionPresheaf(OpenLattice.build(R1, regions))
        assert p.lattice.meet("A", "B") == EMPTY_OPEN
        probes = [section("0", "U", 1), section("x1", "U", 1)]
        injective, gluing = check_equalizer(p, "U", ["A", "B"], probes)
        assert injective.status is Status.PASS
        assert gluing.status is Status.WARN
        assert gluing.detail == (
            "2 compatible tuples glued, 0 incompatible flagged, "
            "2 piecewise over disconnected members (not representable)"
        )


class TestGerms:
    def test_residue_and_maximal_ideal(self, nested):
        unit = germ_at(nested, section("x1^2 + 1", "U", 1), ORIGIN)
        coordinate = germ_at(nested, section("x1", "U", 1), ORIGIN)
        assert residue(unit) == 1
        assert not in_maximal_ideal(unit)
        assert in_maximal_ideal(coordinate)
        assert residue(germ_at(nested, section("0", "V", 1), ORIGIN)) == 0

    def test_germ_outside_domain(self, nested):
        with pytest.raises(DomainError, match="is not in W"):
            germ_at(nested, section("x1", "W", 1), (Fraction(1, 2),))

    def test_germ_equality(self, nested, twobox):
        on_u = germ_at(nested, section("x1", "U", 1), ORIGIN)
        on_v = germ_at(nested, section("x1", "V", 1), ORIGIN)
        assert germ_equal(nested, on_u, on_v)
        shifted = germ_at(nested, section("(x1 + 1)^2 - 1", "U", 1), ORIGIN)
        expanded = germ_at(nested, section("x1^2 + 2*x1", "U", 1), ORIGIN)
        assert germ_equal(nested, shifted, expanded)
        point = (Fraction(1, 2), Fraction(0))
        assert not germ_equal(
            twobox, germ_at(twobox, section("x1", "U"), point), germ_at(twobox, section("x2", "U"), point)
        )

    def test_germs_at_different_points(self, nested):
        s = section("x1", "U", 1)
        with pytest.raises(BasePointError):
            germ_equal(nested, germ_at(nested, s, ORIGIN), germ_at(nested, s, (Fraction(1, 8),)))

    def test_ideal_absorbs_products(self, nested):
        coordinate = germ_at(nested, section("x1", "U", 1), ORIGIN)
        other = germ_at(nested, section("exp(x1) + 3", "V", 1), ORIGIN)
        product = germ_product(nested, coordinate, other)
        assert product.representative.domain == "V"
        assert in_maximal_ideal(product)

    def test_units_invert_on_the_smallest_open(self, nested):
        unit = germ_at(nested, section("x1 + 2", "U", 1), ORIGIN)
        inverse = germ_inverse(nested, unit)
        assert inverse.representative.domain == "W"
        assert residue(germ_product(nested, unit, inverse)) == 1

    def test_non_units_have_no_inverse(self, nested):
        with pytest.raises(EvaluationError):
            germ_inverse(nested, germ_at(nested, section("x1", "U", 1), ORIGIN))

    def test_local_ring_on_probe_germs(self, nested):
        germs = [
            germ_at(nested, section(text, domain, 1), ORIGIN)
            for text, domain in [("x1", "U"), ("x1^2 + 1", "V"), ("exp(x1)", "W"), ("3*x1 - x1^3", "U")]
        ]
        findings = check_local_ring(nested, germs)
        assert [f.check for f in findings] == ["residue-homomorphism", "maximal-ideal", "units"]
        assert all(f.status is Status.PASS for f in findings)

    def test_local_ring_without_germs_warns(self, nested):
        (finding,) = check_local_ring(nested, [])
        assert finding.status is Status.WARN

    @settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        seeds=st.tuples(
            st.integers(min_value=0, max_value=2**32 - 1),
            st.integers(min_value=0, max_value=2**32 - 1),
        )
    )
    def test_residue_is_a_ring_homomorphism(self, nested, seeds):
        a, b = (
            germ_at(nested, Section(random_polynomial(np.random.default_rng(seed), 1, 3, 4), "V"), ORIGIN)
            for seed in seeds
        )
        assert residue(germ_sum(nested, a, b)) == residue(a) + residue(b)
        assert residue(germ_product(nested, a, b)) == residue(a) * residue(b)
        assert germ_equal(nested, a, a)
        assert germ_equal(nested, a, b) == germ_equal(nested, b, a)

    def test_local_ring_with_transcendental_residues(self, nested):
        point = (Fraction(1, 5),)
        germs = [
            germ_at(nested, section(text, domain, 1), point)
            for text, domain in [("x1", "U"), ("exp(x1)", "V"), ("x1^2 + 1", "U"), ("sin(x1)", "W")]
        ]
        findings = check_local_ring(nested, germs)
        assert [f.status for f in findings] == [Status.PASS] * 3, [f.detail for f in findings]

    def test_germ_equality_is_transitive(self, nested):
        rng = np.random.default_rng(DEFAULT_SEED)
        x1 = parse("x1", 1)
        for _ in range(20):
            e = random_polynomial(rng, 1, 3, 4)
            chain = [
                germ_at(nested, Section(e, "U"), ORIGIN),
                germ_at(nested, Section(canonicalize(e), "V"), ORIGIN),
                germ_at(nested, Section(e + x1 - x1, "W"), ORIGIN),
            ]
            assert germ_equal(nested, chain[0], chain[1])
            assert germ_equal(nested, chain[1], chain[2])
            assert germ_equal(nested, chain[0], chain[2])
            other = germ_at(nested, Section(e + x1, "U"), ORIGIN)
            assert not any(germ_equal(nested, other, germ) for germ in chain)

    def test_maximal_ideal_is_closed_on_random_pairs(self, nested):
        rng = np.random.default_rng(DEFAULT_SEED)
        for _ in range(50):
            a, b = (random_polynomial(rng, 1, 3, 4) for _ in range(2))
            germs = [germ_at(nested, Section(e, "V"), ORIGIN) for e in (a, b)]
            germs += [
                germ_at(nested, Section(e - residue(g), "U"), ORIGIN)
                for e, g in zip((a, b), germs, strict=True)
            ]
            for g, h in itertools.product(germs, repeat=2):
                total, product = germ_sum(nested, g, h), germ_product(nested, g, h)
                assert residue(total) == residue(g) + residue(h)
                assert residue(product) == residue(g) * residue(h)
                if in_maximal_ideal(g) and in_maximal_ideal(h):
                    assert in_maximal_ideal(total)
                if in_maximal_ideal(g):
                    assert in_maximal_ideal(product)


class TestMorphisms:
    def test_pullback_substitutes_components(self):
        manifest = load_fixture("stalk.json")
        square = manifest.morphisms["square"].morphism
        image = square.apply("C", section("x1 + 1", "C", 1))
        assert image.domain == "A"
        assert canonicalize(image.expr) == canonicalize(parse("x1^2 + 1", 1))

    def test_identity_pullback_is_the_identity_morphism(self, twobox):
        identity = SmoothMapDesc.identity(twobox.ambient)
        pulled = pullback_morphism(identity, twobox, twobox)
        assert pulled.preimages == identity_morphism(twobox).preimages
        probes = [section("x1*x2", "U"), section("x2^3", "A")]
        assert all(not f.failed for f in check_morphism_square(pulled, probes))
        assert all(not f.failed for f in check_morphism_square(identity_morphism(twobox), probes))

    def test_reflection_preimages_are_computed(self, twobox):
        reflect = SmoothMapDesc(twobox.ambient, twobox.ambient, (parse("x1", 2), parse("-x2", 2)))
        pulled = pullback_morphism(reflect, twobox, twobox)
        assert pulled.preimages["A&B"] == "A&B"

    def test_missing_preimage_declaration(self, nested):
        square = SmoothMapDesc(R1, R1, (parse("x1^2", 1),))
        with pytest.raises(PreimageError, match="missing preimage declaration"):
            pullback_morphism(square, nested, nested)

    def test_declared_preimage_must_map_inside(self, nested):
        scaled = SmoothMapDesc(R1, R1, (parse("x1^2 * 4", 1),))
        with pytest.raises(PreimageError, match="outside W"):
            pullback_morphism(scaled, nested, nested, {"U": "W", "V": "W", "W": "V"})

    def test_composite_pullbacks(self):
        manifest = load_fixture("stalk.json")
        square, negate = manifest.morphisms["square"], manifest.morphisms["negate"]
        probes = [section(text, "H", 1) for text in ("x1", "x1^3 + x1", "exp(x1)")]
        right = negate.mapping.compose(square.mapping)
        wrong = square.mapping.compose(negate.mapping)
        assert check_functoriality(square.morphism, negate.morphism, right, probes)
        assert not check_functoriality(square.morphism, negate.morphism, wrong, probes)

    def test_compose_morphisms(self):
        manifest = load_fixture("stalk.json")
        square, negate = manifest.morphisms["square"].morphism, manifest.morphisms["negate"].morphism
        composed = compose_morphisms(square, negate)
        assert composed.preimages["H"] == "C"
        image = composed.apply("H", section("x1 + 1", "H", 1))
        assert image.domain == "C"
        assert canonicalize(image.expr) == canonicalize(parse("1 - x1^2", 1))

    def test_corrupted_component_breaks_the_square(self):
        manifest = load_fixture("corrupted.json")
        broken = manifest.morphisms["broken"]
        assert broken.corrupted
        findings = check_morphism_square(broken.morphism, [section("x1*x2", "U"), section("x2", "A")])
        assert any(f.failed and f.subject == "A<=U" for f in findings)


class TestStalks:
    def test_identity_is_a_stalk_isomorphism(self, nested):
        germs = [germ_at(nested, section(text, "U", 1), ORIGIN) for text in ("x1", "x1^2", "x1 + 1")]
        verdict = stalkwise_iso_check(identity_morphism(nested), ORIGIN, germs, germs)
        assert verdict.is_isomorphism
        assert verdict.describe() == "isomorphism over 3 probe germs and 3 target germs"

    def test_translation_is_a_stalk_isomorphism(self):
        target = presheaf(R1, {"U": [(-4, 4)]})
        source = presheaf(R1, {"P": [(-5, 3)]})
        shift = SmoothMapDesc(R1, R1, (parse("x1 + 1", 1),))
        m = pullback_morphism(shift, source, target)
        assert m.preimages["U"] == "P"
        image_point = shift(ORIGIN)
        probes = [germ_at(target, section(text, "U", 1), image_point) for text in ("x1", "x1^2", "x1^3 - 2")]
        targets = [germ_at(source, section(text, "P", 1), ORIGIN) for text in ("x1", "x1^2 + x1", "7")]
        verdict = stalkwise_iso_check(m, ORIGIN, probes, targets)
        assert verdict.injective
        assert verdict.surjective

    def test_squaring_misses_odd_germs(self):
        manifest = load_fixture("stalk.json")
        p = manifest.presheaf
        m = manifest.morphisms["square"].morphism
        probes = [germ_at(p, manifest.sections[name], ORIGIN) for name in ("coord", "unit")]
        targets = [germ_at(p, manifest.sections["coord"], ORIGIN)]
        verdict = stalkwise_iso_check(m, ORIGIN, probes, targets)
        assert verdict.injective
        assert not verdict.surjective
        assert "surjectivity fails for [x1]@(0)" in verdict.describe()
