"""Target schema for transformation: classes and properties.

Deliberately small: single-inheritance classes and properties with one
domain class and one range (a class or a literal kind). That is enough to
type the produced graph, validate mappings before any transformation runs,
and check domain/range consistency over the output. The schema is data,
loaded from a JSON document, so projects bring their own.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import CycleDetected, DocumentParseError

LITERAL_RANGES = ("text", "integer", "decimal", "date")

# names become IRI path segments; keep them plain
_NAME = re.compile(r"^[A-Za-z][A-Za-z0-9_-]*$")


@dataclass(frozen=True)
class ClassDef:
    name: str
    subclass_of: str | None = None


@dataclass(frozen=True)
class PropertyDef:
    name: str
    domain: str
    range: str  # class name or literal kind

    @property
    def literal(self) -> bool:
        return self.range in LITERAL_RANGES


@dataclass(frozen=True)
class Ontology:
    classes: dict[str, ClassDef]
    properties: dict[str, PropertyDef]

    def is_class(self, name: str) -> bool:
        return name in self.classes

    def is_subclass(self, child: str, ancestor: str) -> bool:
        """Reflexive-transitive subclass check."""
        current: str | None = child
        while current is not None:
            if current == ancestor:
                return True
            cls = self.classes.get(current)
            current = cls.subclass_of if cls else None
        return False

    def ancestors(self, name: str) -> list[str]:
        """The class itself, then its superclasses bottom-up."""
        out = []
        current: str | None = name
        while current is not None and current in self.classes:
            out.append(current)
            current = self.classes[current].subclass_of
        return out

    def property(self, name: str) -> PropertyDef | None:
        return self.properties.get(name)


def ontology_from_doc(doc: dict) -> Ontology:
    try:
        class_list = doc["classes"]
        property_list = doc.get("properties", [])
    except (KeyError, TypeError) as exc:
        raise DocumentParseError(f"malformed schema document: {exc}") from exc

    classes: dict[str, ClassDef] = {}
    for obj in class_list:
        name = obj.get("name", "")
        if not _NAME.match(name):
            raise DocumentParseError(f"class name {name!r} is not IRI-safe")
        if name in classes:
            raise DocumentParseError(f"duplicate class {name!r}")
        classes[name] = ClassDef(name=name, subclass_of=obj.get("subclass_of"))
    for cls in classes.values():
        if cls.subclass_of is not None and cls.subclass_of not in classes:
            raise DocumentParseError(f"class {cls.name!r} extends unknown class {cls.subclass_of!r}")
    for name in classes:
        seen = {name}
        current = classes[name].subclass_of
        while current is not None:
            if current in seen:
                raise CycleDetected(f"class hierarchy cycles through {current!r}")
            seen.add(current)
            current = classes[current].subclass_of

    properties: dict[str, PropertyDef] = {}
    for obj in property_list:
        name = obj.get("name", "")
        if not _NAME.match(name):
            raise DocumentParseError(f"property name {name!r} is not IRI-safe")
        if name in properties:
            raise DocumentParseError(f"duplicate property {name!r}")
        domain = obj.get("domain", "")
        rng = obj.get("range", "")
        if domain not in classes:
            raise DocumentParseError(f"property {name!r} has unknown domain {domain!r}")
        if rng not in classes and rng not in LITERAL_RANGES:
            raise DocumentParseError(f"property {name!r} has unknown range {rng!r}")
        properties[name] = PropertyDef(name=name, domain=domain, range=rng)

    return Ontology(classes=classes, properties=properties)


def ontology_from_text(text: str) -> Ontology:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentParseError(str(exc), line=exc.lineno, column=exc.colno) from exc
    return ontology_from_doc(doc)


def ontology_to_doc(ontology: Ontology) -> dict:
    classes = []
    for name in sorted(ontology.classes):
        cls = ontology.classes[name]
        obj: dict = {"name": cls.name}
        if cls.subclass_of is not None:
            obj["subclass_of"] = cls.subclass_of
        classes.append(obj)
    properties = [
        {"domain": p.domain, "name": p.name, "range": p.range}
        for p in (ontology.properties[n] for n in sorted(ontology.properties))
    ]
    return {"classes": classes, "format_version": 1, "properties": properties}
