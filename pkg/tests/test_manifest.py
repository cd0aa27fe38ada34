import json
from pathlib import Path

import pytest

from conftest import fixture_path
from conftest import load_fixture
from poissonsheaf.corners import ModelSpace
from poissonsheaf.manifest import ManifestError
from poissonsheaf.manifest import load_manifest


def write_manifest(tmp_path: Path, payload: dict | str) -> Path:
    path = tmp_path / "manifest.json"
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload), encoding="utf-8")
    return path


def test_so3_fixture():
    manifest = load_fixture("so3.json")
    assert manifest.space == ModelSpace(3, 0)
    assert manifest.lattice.nonempty_names == ("U", "V", "W")
    assert manifest.pi is not None
    assert str(manifest.pi) == "{1,2: x3, 1,3: -x2, 2,3: x1}"
    assert manifest.checks == frozenset({"sheaf", "poisson"})


def test_twobox_fixture_resolves_everything():
    manifest = load_fixture("twobox.json")
    assert manifest.covers["halves"].members == ("A", "B")
    assert manifest.gluings["mismatch"].expect == "reject"
    assert manifest.morphisms["reflect"].morphism.preimages["A"] == "A"
    assert manifest.section("sA").domain == "A"


def test_unknown_section_name():
    with pytest.raises(ManifestError, match="unknown section 'nope'"):
        load_fixture("twobox.json").section("nope")


def test_section_over_undeclared_open():
    with pytest.raises(ManifestError, match="sections.s.open: unresolved open 'Z'"):
        load_fixture("bad_reference.json")


def test_inconsistent_antisymmetric_pair():
    with pytest.raises(ManifestError, match="pi: .*not antisymmetric"):
        load_fixture("bad_antisymmetry.json")


def test_fibre_products_are_loaded():
    manifest = load_fixture("fibres.json")
    assert set(manifest.fibre_products) == {
        "halfline",
        "halfplane",
        "yboundary",
        "boundaryless",
        "plane",
        "corner",
        "illposed",
    }
    assert manifest.fibre_products["halfline"].x == ModelSpace(1, 1)


def test_invalid_json_reports_a_location(tmp_path):
    path = write_manifest(tmp_path, '{"space": nope}')
    with pytest.raises(ManifestError, match=r"manifest.json:1:11: invalid JSON"):
        load_manifest(path)


def test_missing_file(tmp_path):
    with pytest.raises(ManifestError, match="cannot read manifest"):
        load_manifest(tmp_path / "missing.json")


@pytest.mark.parametrize(
    ("payload", "message"),
    [
        ({"space": {"n": 2}, "colours": {}}, "colours: unknown manifest key"),
        ({"space": {"n": "two"}}, "space.n: expected an integer"),
        ({"space": {"n": 1, "k": 2}}, "invalid model space"),
        (
            {"space": {"n": 2}, "opens": {"U": [[[0, 1]]]}},
            r"opens.U\[0\]: box has 1 intervals, expected 2",
        ),
        (
            {"space": {"n": 1}, "opens": {"U": [[["a", 1]]]}},
            "invalid number 'a'",
        ),
        (
            {"space": {"n": 1, "k": 1}, "opens": {"U": [[[-1, 1]]]}},
            "opens.U: box leaves",
        ),
        (
            {"space": {"n": 1}, "opens": {"U": [[[0, 1]]]}, "sections": {"s": {"expr": "x2", "open": "U"}}},
            "sections.s.expr: variable 'x2' exceeds dimension 1",
        ),
        (
            {"space": {"n": 1}, "opens": {"U": [[[0, 1]]]}, "sections": {"s": {"expr": "x1 +", "open": "U"}}},
            "unexpected end of input at position 4",
        ),
        (
            {
                "space": {"n": 1},
                "opens": {"A": [[[0, 2]]], "B": [[[1, 3]]]},
                "inclusions": [["A", "B"]],
            },
            "declared inclusion A <= B contradicted by geometry",
        ),
        (
            {"space": {"n": 1}, "pi_overrides": {}, "checks": ["sheaf", "stalks"]},
            "unknown check 'stalks'",
        ),
        (
            {"space": {"n": 2}, "pi": {"1-2": "1"}},
            "component keys look like",
        ),
        (
            {
                "space": {"n": 1},
                "opens": {"U": [[[-1, 1]]]},
                "maps": {"sq": {"components": ["x1^2"]}},
                "morphisms": {"sq": {"map": "sq"}},
            },
            "missing preimage declaration for U",
        ),
        (
            {
                "space": {"n": 1},
                "opens": {"U": [[[-1, 1]]]},
                "pi_overrides": {"U": {}},
            },
            "overrides need a base bivector",
        ),
        (
            {
                "space": {"n": 1},
                "fibre_products": {
                    "w": {"x": {"n": 1}, "y": {"n": 1}, "z": {"n": 1}, "f": ["x1"], "g": ["x1"], "step": 0}
                },
            },
            "grid step must be positive",
        ),
        (
            {
                "space": {"n": 1},
                "opens": {"U": [[[-1, 1]]]},
                "sections": {"s": {"expr": "x1", "open": "U"}},
                "covers": {"c": {"open": "U", "members": ["U"]}},
                "gluings": {"g": {"cover": "c", "parts": ["s"], "expect": "maybe"}},
            },
            "expected 'glue' or 'reject'",
        ),
    ],
)
def test_load_errors(tmp_path, payload, message):
    with pytest.raises(ManifestError, match=message):
        load_manifest(write_manifest(tmp_path, payload))


def test_rationals_may_be_strings_or_decimals(tmp_path):
    path = write_manifest(
        tmp_path,
        {"space": {"n": 1}, "opens": {"U": [[["-1/2", 0.25]]]}},
    )
    region = load_manifest(path).lattice.region("U")
    (((lower, upper),),) = region.boxes
    assert (str(lower), str(upper)) == ("-1/2", "1/4")


def test_corrupt_component_marks_the_morphism():
    manifest = load_fixture("corrupted.json")
    declared = manifest.morphisms["broken"]
    assert declared.corrupted
    assert str(declared.morphism.components["A"][0]) == "x1 + 1"
    assert str(declared.morphism.components["U"][0]) == "x1"


def test_fixture_paths_exist():
    for name in ("so3.json", "nonjacobi.json", "constant.json", "empty.json", "stalk.json"):
        assert fixture_path(name).is_file()
