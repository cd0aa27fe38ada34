from fractions import Fraction

import numpy as np
import pytest

from conftest import load_fixture
from poissonsheaf.constants import PROBES_PER_OPEN
from poissonsheaf.core import probe_sections
from poissonsheaf.core import run_bracket
from poissonsheaf.core import run_directed
from poissonsheaf.core import run_fibre
from poissonsheaf.core import run_sheaf_battery
from poissonsheaf.core import run_stalk
from poissonsheaf.definitions import Status
from poissonsheaf.expr import DimensionMismatchError
from poissonsheaf.manifest import ManifestError
from poissonsheaf.sheaf import DomainError


ORIGIN = (Fraction(0),)


def by_check(document, check):
    return [finding for finding in document.findings if finding.check == check]


def test_probe_sections_are_seeded():
    manifest = load_fixture("twobox.json")
    first = probe_sections(manifest, np.random.default_rng(1))
    second = probe_sections(manifest, np.random.default_rng(1))
    assert first == second
    assert len(first) == len(manifest.sections) + PROBES_PER_OPEN * len(manifest.lattice.nonempty_names)
    assert [s.domain for s in first[: len(manifest.sections)]] == ["A", "A", "B", "A", "B", "B"]


class TestSheafBattery:
    def test_twobox_passes(self):
        document = run_sheaf_battery(load_fixture("twobox.json"))
        assert document.status is Status.PASS
        checks = {finding.check for finding in document.findings}
        assert {
            "composition",
            "restriction-ring",
            "locality",
            "equalizer-injective",
            "equalizer-gluing",
            "gluing",
            "morphism-square",
        } <= checks
        mismatch = [f for f in by_check(document, "gluing") if f.subject == "mismatch"]
        assert mismatch[0].detail.startswith("rejected: parts 0 and 1 disagree on overlap A&B")

    def test_corrupted_fixture_names_the_chain(self):
        document = run_sheaf_battery(load_fixture("corrupted.json"))
        assert document.status is Status.FAIL
        failed = [f.subject for f in by_check(document, "composition") if f.failed]
        assert failed == ["A&B<=A<=U"]
        assert any(f.failed for f in by_check(document, "morphism-square"))

    def test_empty_lattice_is_vacuous(self):
        document = run_sheaf_battery(load_fixture("empty.json"))
        assert document.status is Status.PASS
        (finding,) = document.findings
        assert finding.status is Status.WARN
        assert finding.detail == "empty lattice (vacuous)"

    def test_pullbacks_are_functorial(self):
        document = run_sheaf_battery(load_fixture("stalk.json"))
        assert document.status is Status.PASS
        subjects = {f.subject for f in by_check(document, "pullback-functorial")}
        assert subjects == {
            "halve.negate",
            "halve.square",
            "negate.halve",
            "negate.square",
            "square.halve",
            "square.negate",
        }

    def test_prefixes_morphism_subjects(self):
        document = run_sheaf_battery(load_fixture("stalk.json"))
        squares = {f.subject for f in by_check(document, "morphism-square")}
        assert "square:E<=B" in squares


class TestBracketCommand:
    def test_so3(self):
        assert str(run_bracket(load_fixture("so3.json"), "x1", "x2")) == "x3"

    def test_unknown_section(self):
        with pytest.raises(ManifestError, match="unknown section 'x9'"):
            run_bracket(load_fixture("so3.json"), "x1", "x9")

    def test_needs_a_bivector(self):
        with pytest.raises(ManifestError, match="declares no bivector"):
            run_bracket(load_fixture("twobox.json"), "sA", "sB")


class TestFibreCommand:
    @pytest.mark.parametrize(
        ("name", "dimension", "decomposition"),
        [
            ("halfline", 1, "1 = 1 + 0"),
            ("halfplane", 2, "1 = 1 + 0"),
            ("yboundary", 1, "1 = 0 + 1"),
            ("boundaryless", 1, "0 = 0 + 0"),
            ("plane", 3, "0 = 0 + 0"),
        ],
    )
    def test_accepted_fibre_products(self, name, dimension, decomposition):
        document = run_fibre(load_fixture("fibres.json"), name)
        assert document.status is Status.PASS
        assert by_check(document, "fibre-dim")[0].detail == f"dim {dimension}"
        assert by_check(document, "boundary-decomposition")[0].detail == decomposition
        squares = by_check(document, "fibre-square")
        assert squares[0].subject == f"{name}:x1"
        assert all(not f.failed for f in squares)

    def test_corner_meets_corner(self):
        document = run_fibre(load_fixture("fibres.json"), "corner")
        assert document.status is Status.FAIL
        (finding,) = by_check(document, "boundary-decomposition")
        assert finding.detail.startswith("rejected: boundary of X meets boundary of Y")

    def test_ill_posed(self):
        document = run_fibre(load_fixture("fibres.json"), "illposed")
        (finding,) = document.findings
        assert finding.failed
        assert finding.detail == "empty/ill-posed fibre product: dimension -1"

    def test_unknown_fibre_product(self):
        with pytest.raises(ManifestError, match="unknown fibre product 'nope'"):
            run_fibre(load_fixture("fibres.json"), "nope")


class TestStalkCommand:
    def test_unit_germ(self):
        document = run_stalk(load_fixture("stalk.json"), "unit", ORIGIN)
        assert document.status is Status.PASS
        assert by_check(document, "residue")[0].detail == "1"
        assert by_check(document, "maximal-ideal")[0].detail == "not in m (unit)"
        assert by_check(document, "units")[0].detail == "3 units inverted"

    def test_coordinate_germ(self):
        document = run_stalk(load_fixture("stalk.json"), "coord", ORIGIN)
        assert by_check(document, "residue")[0].detail == "0"
        assert by_check(document, "maximal-ideal")[0].detail == "in m"

    @pytest.mark.parametrize("numerator", [1, 8, 20, 39])
    def test_transcendental_germ_away_from_the_origin(self, numerator):
        document = run_stalk(load_fixture("stalk.json"), "growth", (Fraction(numerator, 41),))
        assert document.status is Status.PASS
        (finding,) = by_check(document, "residue-homomorphism")
        assert finding.status is Status.PASS

    def test_point_of_the_wrong_dimension(self):
        with pytest.raises(DimensionMismatchError, match="has 2 coordinates"):
            run_stalk(load_fixture("stalk.json"), "coord", (Fraction(0), Fraction(0)))

    def test_point_outside_the_domain(self):
        with pytest.raises(DomainError):
            run_stalk(load_fixture("stalk.json"), "coord", (Fraction(5),))

    def test_negation_is_a_stalk_isomorphism(self):
        document = run_stalk(load_fixture("stalk.json"), "coord", ORIGIN, "negate")
        (finding,) = by_check(document, "stalk-iso")
        assert finding.status is Status.PASS
        assert finding.subject == "negate@(0)"
        assert finding.detail.startswith("isomorphism over")

    def test_squaring_is_not(self):
        document = run_stalk(load_fixture("stalk.json"), "coord", ORIGIN, "square")
        (finding,) = by_check(document, "stalk-iso")
        assert finding.failed
        assert "surjectivity fails" in finding.detail

    def test_unknown_morphism(self):
        with pytest.raises(ManifestError, match="unknown morphism 'twist'"):
            run_stalk(load_fixture("stalk.json"), "coord", ORIGIN, "twist")


def test_directed_run_covers_every_fibre_product():
    document = run_directed(load_fixture("fibres.json"))
    assert document.command == "check"
    subjects = {f.subject for f in by_check(document, "fibre-dim")}
    assert subjects == {"halfline", "halfplane", "yboundary", "boundaryless", "plane", "corner", "illposed"}
    assert document.status is Status.FAIL
