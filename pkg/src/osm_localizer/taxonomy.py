"""Rule table mapping OSM tags to semantic classes.

The three groups (areas, ways, nodes) correspond to the three raster planes.
Class id 0 of every group is reserved for void.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional


class Group(enum.IntEnum):
    AREA = 0
    WAY = 1
    NODE = 2


_GROUP_NAMES = {"area": Group.AREA, "way": Group.WAY, "node": Group.NODE}


class TaxonomyError(ValueError):
    pass


@dataclass(frozen=True)
class SemanticClass:
    group: Group
    class_id: int
    name: str
    draw_priority: int = 0
    way_width_m: float = 0.0


@dataclass(frozen=True)
class _Condition:
    key: str
    values: Optional[frozenset]  # None means any value

    def matches(self, tags: Mapping[str, str]) -> bool:
        if self.key not in tags:
            return False
        return self.values is None or tags[self.key] in self.values


@dataclass(frozen=True)
class _Rule:
    cls: SemanticClass
    conditions: tuple

    def matches(self, tags: Mapping[str, str]) -> bool:
        return any(c.matches(tags) for c in self.conditions)


@dataclass
class ClassTaxonomy:
    version: int
    rules: list = field(default_factory=list)

    def classes(self, group: Group) -> list[SemanticClass]:
        return [r.cls for r in self.rules if r.cls.group == group]

    def size(self, group: Group) -> int:
        """Number of ids in the group including void."""
        return len(self.classes(group)) + 1

    def by_name(self, name: str) -> SemanticClass:
        for r in self.rules:
            if r.cls.name == name:
                return r.cls
        raise KeyError(name)

    def lookup(self, group: Group, class_id: int) -> SemanticClass:
        for c in self.classes(group):
            if c.class_id == class_id:
                return c
        raise KeyError((group, class_id))


def _parse_condition(text: str, lineno: int) -> _Condition:
    if "=" not in text:
        raise TaxonomyError(f"line {lineno}: condition {text!r} lacks '='")
    key, value = (s.strip() for s in text.split("=", 1))
    if not key or not value:
        raise TaxonomyError(f"line {lineno}: empty key or value in {text!r}")
    if value == "*":
        return _Condition(key, None)
    return _Condition(key, frozenset(v.strip() for v in value.split("|")))


def parse_taxonomy(text: str) -> ClassTaxonomy:
    version = None
    rules = []
    next_id = {g: 1 for g in Group}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TaxonomyError(f"line {lineno}: expected 'name = rule'")
        lhs, rhs = (s.strip() for s in line.split("=", 1))
        if lhs == "version":
            try:
                version = int(rhs)
            except ValueError:
                raise TaxonomyError(f"line {lineno}: bad version {rhs!r}") from None
            continue
        if "." not in lhs:
            raise TaxonomyError(f"line {lineno}: class name must be <group>.<name>")
        group_name, name = lhs.split(".", 1)
        if group_name not in _GROUP_NAMES:
            raise TaxonomyError(f"line {lineno}: unknown group {group_name!r}")
        if name in seen:
            raise TaxonomyError(f"line {lineno}: duplicate class {name!r}")
        seen.add(name)
        group = _GROUP_NAMES[group_name]

        parts = [p.strip() for p in rhs.split(";")]
        conditions = tuple(_parse_condition(c.strip(), lineno) for c in parts[0].split(",") if c.strip())
        if not conditions:
            raise TaxonomyError(f"line {lineno}: class {name!r} has no conditions")
        options = {}
        for opt in parts[1:]:
            if not opt:
                continue
            k, _, v = opt.partition("=")
            options[k.strip()] = v.strip()
        unknown = set(options) - {"priority", "width"}
        if unknown:
            raise TaxonomyError(f"line {lineno}: unknown options {sorted(unknown)}")
        if "width" in options and group != Group.WAY:
            raise TaxonomyError(f"line {lineno}: width applies to way classes only")
        try:
            width = float(options.get("width", 0.0))
            priority = int(options.get("priority", 0))
        except ValueError:
            raise TaxonomyError(f"line {lineno}: bad numeric option") from None
        if group == Group.WAY and width <= 0:
            raise TaxonomyError(f"line {lineno}: way class {name!r} needs width > 0")
        cls = SemanticClass(group, next_id[group], name, priority, width)
        next_id[group] += 1
        rules.append(_Rule(cls, conditions))

    if version is None:
        raise TaxonomyError("taxonomy lacks a 'version = N' line")
    for g in Group:
        if next_id[g] > 255:
            raise TaxonomyError(f"group {g.name} exceeds 255 classes")
    return ClassTaxonomy(version, rules)


def load_taxonomy(path: str | Path | None = None) -> ClassTaxonomy:
    """Load a taxonomy file, or the packaged default when ``path`` is None."""
    if path is None:
        text = resources.files("osm_localizer.data").joinpath("default_taxonomy.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_taxonomy(text)


def classify_element(
    tags: Mapping[str, str],
    taxonomy: ClassTaxonomy,
    groups: Iterable[Group] | None = None,
) -> Optional[SemanticClass]:
    """Return the class of the first rule (in taxonomy order) matching ``tags``."""
    allowed = set(Group) if groups is None else set(groups)
    for rule in taxonomy.rules:
        if rule.cls.group in allowed and rule.matches(tags):
            return rule.cls
    return None
