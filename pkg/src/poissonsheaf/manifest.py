"""
JSON manifest loading.

A manifest declares one model space and everything built on it: opens,
sections, covers, maps, pullback morphisms, a bivector and fibre products.
Every name is resolved and every expression parsed on load, so commands
only ever see a consistent `Manifest`.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field
from fractions import Fraction
from pathlib import Path
from typing import Any
from typing import Literal

from poissonsheaf.corners import FibreProductDesc
from poissonsheaf.corners import ModelSpace
from poissonsheaf.corners import Region
from poissonsheaf.corners import SmoothMapDesc
from poissonsheaf.definitions import DEFAULT_SETTINGS
from poissonsheaf.definitions import PoissonSheafError
from poissonsheaf.definitions import VerificationSettings
from poissonsheaf.expr import Expr
from poissonsheaf.expr import parse
from poissonsheaf.poisson import BivectorField
from poissonsheaf.sheaf import FunctionPresheaf
from poissonsheaf.sheaf import OpenLattice
from poissonsheaf.sheaf import Section
from poissonsheaf.sheaf import SheafMorphismDesc
from poissonsheaf.sheaf import pullback_morphism
from poissonsheaf.typehints import Bounds
from poissonsheaf.typehints import IndexPair
from poissonsheaf.typehints import OpenName


KNOWN_KEYS = frozenset(
    {
        "space",
        "opens",
        "inclusions",
        "restriction_offsets",
        "sections",
        "covers",
        "gluings",
        "maps",
        "morphisms",
        "pi",
        "pi_overrides",
        "fibre_products",
        "checks",
    }
)
KNOWN_CHECKS = frozenset({"sheaf", "poisson", "fibre"})


class ManifestError(PoissonSheafError):
    """Unreadable, malformed or inconsistent manifest."""


@dataclass(slots=True, frozen=True)
class CoverSpec:
    open: OpenName
    members: tuple[OpenName, ...]


@dataclass(slots=True, frozen=True)
class GluingSpec:
    cover: str
    parts: tuple[str, ...]
    expect: Literal["glue", "reject"] = "glue"


@dataclass(slots=True, frozen=True)
class DeclaredMorphism:
    """Pullback along an endomap of the manifest's space, possibly corrupted on one open."""

    map_name: str
    mapping: SmoothMapDesc
    morphism: SheafMorphismDesc
    corrupted: bool = False


@dataclass(slots=True, frozen=True)
class Manifest:
    path: Path
    space: ModelSpace
    presheaf: FunctionPresheaf
    sections: Mapping[str, Section] = field(default_factory=dict)
    covers: Mapping[str, CoverSpec] = field(default_factory=dict)
    gluings: Mapping[str, GluingSpec] = field(default_factory=dict)
    maps: Mapping[str, SmoothMapDesc] = field(default_factory=dict)
    morphisms: Mapping[str, DeclaredMorphism] = field(default_factory=dict)
    pi: BivectorField | None = None
    pi_overrides: Mapping[OpenName, BivectorField] = field(default_factory=dict)
    fibre_products: Mapping[str, FibreProductDesc] = field(default_factory=dict)
    checks: frozenset[str] = frozenset()

    @property
    def lattice(self) -> OpenLattice:
        return self.presheaf.lattice

    def section(self, name: str) -> Section:
        try:
            return self.sections[name]
        except KeyError:
            raise ManifestError(f"unknown section {name!r}") from None


class _Reader:
    """Validates raw JSON values, reporting errors by key path."""

    def __init__(self, path: Path) -> None:
        self.path = path

    def fail(self, where: str, message: str) -> ManifestError:
        return ManifestError(f"{self.path}: {where}: {message}")

    def mapping(self, value: Any, where: str) -> dict[str, Any]:
        if not isinstance(value, dict):
            raise self.fail(where, f"expected an object, got {type(value).__name__}")
        return value

    def sequence(self, value: Any, where: str) -> list[Any]:
        if not isinstance(value, list):
            raise self.fail(where, f"expected a list, got {type(value).__name__}")
        return value

    def text(self, value: Any, where: str) -> str:
        if not isinstance(value, str):
            raise self.fail(where, f"expected a string, got {type(value).__name__}")
        return value

    def integer(self, value: Any, where: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(where, f"expected an integer, got {value!r}")
        return value

    def rational(self, value: Any, where: str) -> Fraction:
        """Integers, decimal numbers or "p/q" strings, read exactly."""
        if isinstance(value, bool):
            raise self.fail(where, f"expected a number, got {value!r}")
        try:
            if isinstance(value, int):
                return Fraction(value)
            if isinstance(value, float):
                return Fraction(repr(value))
            if isinstance(value, str):
                return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise self.fail(where, f"invalid number {value!r}: {exc}") from exc
        raise self.fail(where, f"expected a number, got {value!r}")

    def expression(self, value: Any, dimension: int, where: str) -> Expr:
        try:
            return parse(self.text(value, where), dimension)
        except ManifestError:
            raise
        except PoissonSheafError as exc:
            raise self.fail(where, str(exc)) from exc

    def space(self, value: Any, where: str) -> ModelSpace:
        raw = self.mapping(value, where)
        try:
            return ModelSpace(
                self.integer(raw.get("n"), f"{where}.n"),
                self.integer(raw.get("k", 0), f"{where}.k"),
            )
        except ManifestError:
            raise
        except PoissonSheafError as exc:
            raise self.fail(where, str(exc)) from exc

    def box(self, value: Any, dimension: int, where: str) -> Bounds:
        intervals = self.sequence(value, where)
        if len(intervals) != dimension:
            raise self.fail(where, f"box has {len(intervals)} intervals, expected {dimension}")
        bounds = []
        for index, interval in enumerate(intervals):
            location = f"{where}[{index}]"
            pair = self.sequence(interval, location)
            if len(pair) != 2:
                raise self.fail(location, "an interval is a [lower, upper] pair")
            bounds.append(
                (
                    self.rational(pair[0], f"{location}[0]"),
                    self.rational(pair[1], f"{location}[1]"),
                )
            )
        return tuple(bounds)

    def components(self, value: Any, dimension: int, count: int, where: str) -> tuple[Expr, ...]:
        items = self.sequence(value, where)
        if len(items) != count:
            raise self.fail(where, f"{len(items)} components, expected {count}")
        return tuple(
            self.expression(item, dimension, f"{where}[{index}]")
            for index, item in enumerate(items)
        )

    def bivector(self, value: Any, space: ModelSpace, where: str) -> BivectorField:
        raw = self.mapping(value, where)
        entries: dict[IndexPair, Expr] = {}
        for key, text in raw.items():
            location = f"{where}.{key}"
            try:
                first, second = (int(part) for part in key.split(","))
            except ValueError:
                raise self.fail(location, "component keys look like \"i,j\"") from None
            entries[(first, second)] = self.expression(text, space.n, location)
        try:
            return BivectorField.from_upper(space, entries)
        except PoissonSheafError as exc:
            raise self.fail(where, str(exc)) from exc


def _resolve(reader: _Reader, name: Any, known: Mapping[str, Any], kind: str, where: str) -> str:
    name = reader.text(name, where)
    if name not in known:
        raise reader.fail(where, f"unresolved {kind} {name!r}")
    return name


def load_manifest(
    path: Path, settings: VerificationSettings = DEFAULT_SETTINGS
) -> Manifest:
    """Read, validate and resolve a JSON manifest."""
    reader = _Reader(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"{path}: cannot read manifest: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
        ) from exc
    raw = reader.mapping(raw, "manifest")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise reader.fail(unknown[0], "unknown manifest key")

    space = reader.space(raw.get("space"), "space")
    n = space.n

    regions: dict[OpenName, Region] = {}
    for name, boxes in reader.mapping(raw.get("opens", {}), "opens").items():
        where = f"opens.{name}"
        try:
            regions[name] = Region(
                space,
                tuple(
                    reader.box(box, n, f"{where}[{index}]")
                    for index, box in enumerate(reader.sequence(boxes, where))
                ),
            )
        except ManifestError:
            raise
        except PoissonSheafError as exc:
            raise reader.fail(where, str(exc)) from exc

    inclusions = []
    for index, pair in enumerate(reader.sequence(raw.get("inclusions", []), "inclusions")):
        where = f"inclusions[{index}]"
        items = reader.sequence(pair, where)
        if len(items) != 2:
            raise reader.fail(where, "an inclusion is a [inner, outer] pair")
        inclusions.append(
            (
                _resolve(reader, items[0], regions, "open", f"{where}[0]"),
                _resolve(reader, items[1], regions, "open", f"{where}[1]"),
            )
        )
    try:
        lattice = OpenLattice.build(space, regions, inclusions, settings)
    except PoissonSheafError as exc:
        raise reader.fail("opens", str(exc)) from exc
    opens = lattice.regions

    offsets: dict[tuple[OpenName, OpenName], Expr] = {}
    for index, entry in enumerate(
        reader.sequence(raw.get("restriction_offsets", []), "restriction_offsets")
    ):
        where = f"restriction_offsets[{index}]"
        entry = reader.mapping(entry, where)
        outer = _resolve(reader, entry.get("from"), opens, "open", f"{where}.from")
        inner = _resolve(reader, entry.get("to"), opens, "open", f"{where}.to")
        if not lattice.includes(inner, outer):
            raise reader.fail(where, f"{inner} is not contained in {outer}")
        offsets[(outer, inner)] = reader.expression(entry.get("offset"), n, f"{where}.offset")
    presheaf = FunctionPresheaf(lattice, offsets)

    sections = {}
    for name, entry in reader.mapping(raw.get("sections", {}), "sections").items():
        where = f"sections.{name}"
        entry = reader.mapping(entry, where)
        domain = _resolve(reader, entry.get("open"), opens, "open", f"{where}.open")
        sections[name] = Section(reader.expression(entry.get("expr"), n, f"{where}.expr"), domain)

    covers = {}
    for name, entry in reader.mapping(raw.get("covers", {}), "covers").items():
        where = f"covers.{name}"
        entry = reader.mapping(entry, where)
        members = reader.sequence(entry.get("members"), f"{where}.members")
        covers[name] = CoverSpec(
            _resolve(reader, entry.get("open"), opens, "open", f"{where}.open"),
            tuple(
                _resolve(reader, member, opens, "open", f"{where}.members[{index}]")
                for index, member in enumerate(members)
            ),
        )

    gluings = {}
    for name, entry in reader.mapping(raw.get("gluings", {}), "gluings").items():
        where = f"gluings.{name}"
        entry = reader.mapping(entry, where)
        cover = _resolve(reader, entry.get("cover"), covers, "cover", f"{where}.cover")
        parts = tuple(
            _resolve(reader, part, sections, "section", f"{where}.parts[{index}]")
            for index, part in enumerate(reader.sequence(entry.get("parts"), f"{where}.parts"))
        )
        expect = entry.get("expect", "glue")
        if expect not in ("glue", "reject"):
            raise reader.fail(f"{where}.expect", f"expected 'glue' or 'reject', got {expect!r}")
        gluings[name] = GluingSpec(cover, parts, expect)

    maps = {}
    for name, entry in reader.mapping(raw.get("maps", {}), "maps").items():
        where = f"maps.{name}"
        entry = reader.mapping(entry, where)
        source = reader.space(entry.get("source", raw.get("space")), f"{where}.source")
        target = reader.space(entry.get("target", raw.get("space")), f"{where}.target")
        maps[name] = SmoothMapDesc(
            source,
            target,
            reader.components(entry.get("components"), source.n, target.n, f"{where}.components"),
        )

    morphisms = {}
    for name, entry in reader.mapping(raw.get("morphisms", {}), "morphisms").items():
        where = f"morphisms.{name}"
        entry = reader.mapping(entry, where)
        map_name = _resolve(reader, entry.get("map"), maps, "map", f"{where}.map")
        mapping = maps[map_name]
        if mapping.source != space or mapping.target != space:
            raise reader.fail(where, f"pullbacks need an endomap of {space}")
        declared = {
            _resolve(reader, target, opens, "open", f"{where}.preimages"): _resolve(
                reader, preimage, opens, "open", f"{where}.preimages.{target}"
            )
            for target, preimage in reader.mapping(
                entry.get("preimages", {}), f"{where}.preimages"
            ).items()
        }
        try:
            morphism = pullback_morphism(mapping, presheaf, presheaf, declared, settings)
        except PoissonSheafError as exc:
            raise reader.fail(where, str(exc)) from exc
        corrupt = entry.get("corrupt")
        if corrupt is not None:
            corrupt = reader.mapping(corrupt, f"{where}.corrupt")
            target = _resolve(reader, corrupt.get("open"), opens, "open", f"{where}.corrupt.open")
            morphism = morphism.with_component(
                target,
                reader.components(corrupt.get("components"), n, n, f"{where}.corrupt.components"),
            )
        morphisms[name] = DeclaredMorphism(map_name, mapping, morphism, corrupt is not None)

    pi = None
    if "pi" in raw:
        pi = reader.bivector(raw["pi"], space, "pi")
    overrides = {
        _resolve(reader, open_name, opens, "open", "pi_overrides"): reader.bivector(
            value, space, f"pi_overrides.{open_name}"
        )
        for open_name, value in reader.mapping(raw.get("pi_overrides", {}), "pi_overrides").items()
    }
    if overrides and pi is None:
        raise reader.fail("pi_overrides", "overrides need a base bivector 'pi'")

    fibre_products = {}
    for name, entry in reader.mapping(raw.get("fibre_products", {}), "fibre_products").items():
        where = f"fibre_products.{name}"
        entry = reader.mapping(entry, where)
        x = reader.space(entry.get("x"), f"{where}.x")
        y = reader.space(entry.get("y"), f"{where}.y")
        z = reader.space(entry.get("z"), f"{where}.z")
        try:
            fibre_products[name] = FibreProductDesc(
                x,
                y,
                z,
                SmoothMapDesc(x, z, reader.components(entry.get("f"), x.n, z.n, f"{where}.f")),
                SmoothMapDesc(y, z, reader.components(entry.get("g"), y.n, z.n, f"{where}.g")),
                reader.box(entry["x_bounds"], x.n, f"{where}.x_bounds") if "x_bounds" in entry else (),
                reader.box(entry["y_bounds"], y.n, f"{where}.y_bounds") if "y_bounds" in entry else (),
                reader.rational(entry.get("step", "1/2"), f"{where}.step"),
            )
        except ManifestError:
            raise
        except PoissonSheafError as exc:
            raise reader.fail(where, str(exc)) from exc

    checks = frozenset(
        reader.text(check, f"checks[{index}]")
        for index, check in enumerate(reader.sequence(raw.get("checks", []), "checks"))
    )
    if checks - KNOWN_CHECKS:
        raise reader.fail("checks", f"unknown check {sorted(checks - KNOWN_CHECKS)[0]!r}")

    return Manifest(
        path=path,
        space=space,
        presheaf=presheaf,
        sections=sections,
        covers=covers,
        gluings=gluings,
        maps=maps,
        morphisms=morphisms,
        pi=pi,
        pi_overrides=overrides,
        fibre_products=fibre_products,
        checks=checks,
    )
