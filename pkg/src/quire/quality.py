"""Data quality measurement: completeness, consistency, conciseness.

Measurement never mutates anything. Completeness reads fill rates straight
off the published records; consistency checks the produced graph against
the schema and the transcribed values against their declared formats;
conciseness reports master instances a matching rule still considers
duplicates. Each finding carries the evidence needed to locate it.
"""

from __future__ import annotations

from .config import EngineConfig
from .curation import CurationStore, MatchRule
from .graphstore import Literal, quad_line
from .mapping import LinkSpec, MappingSpec
from .naming import RDF_TYPE
from .ontology import Ontology
from .records import Record, Template, cell_raw, table_rows
from .values import parse_typed


def completeness(template: Template, records: list[Record]) -> list[dict]:
    """Fill rate per column over the live rows of the given records.

    A column never presented with a row reports a null rate: "no data" is
    different from "0% filled".
    """
    out = []
    for table in template.tables:
        for col in table.columns:
            total = 0
            filled = 0
            for record in records:
                rows = table_rows(record, template, table.name)
                for idx, row in enumerate(rows):
                    if row.deleted:
                        continue
                    total += 1
                    if cell_raw(record, template, table.name, idx, col.name) != "":
                        filled += 1
            out.append(
                {
                    "column": col.name,
                    "filled": filled,
                    "rate": None if total == 0 else filled / total,
                    "required": col.required,
                    "rows": total,
                    "table": table.name,
                }
            )
    return out


def _typed_literal_links(spec: MappingSpec):
    def walk(table: str, links: tuple[LinkSpec, ...]):
        for link in links:
            if link.target == "literal" and link.literal_kind != "text":
                yield table, link
            if link.entity is not None:
                yield from walk(table, link.entity.links)

    for entity_map in spec.entities:
        yield from walk(entity_map.table, entity_map.links)


def value_consistency(template: Template, spec: MappingSpec, records: list[Record]) -> list[dict]:
    """Parse rate per typed column: how often values meet their declared form."""
    out = []
    seen = set()
    for table_name, link in _typed_literal_links(spec):
        if (table_name, link.column, link.literal_kind, link.source_format) in seen:
            continue
        seen.add((table_name, link.column, link.literal_kind, link.source_format))
        total = 0
        parsed = 0
        for record in records:
            rows = table_rows(record, template, table_name)
            for idx, row in enumerate(rows):
                if row.deleted:
                    continue
                raw = cell_raw(record, template, table_name, idx, link.column)
                if raw == "":
                    continue
                total += 1
                if parse_typed(raw, link.literal_kind, link.source_format) is not None:
                    parsed += 1
        out.append(
            {
                "column": link.column,
                "kind": link.literal_kind,
                "parsed": parsed,
                "rate": None if total == 0 else parsed / total,
                "source_format": link.source_format,
                "table": table_name,
                "template": template.id,
                "total": total,
            }
        )
    return out


def schema_consistency(snapshot: dict, ontology: Ontology, config: EngineConfig) -> list[dict]:
    """Domain and range violations provable from the graph itself.

    Untyped subjects and objects are skipped: absence of a type assertion
    proves nothing. Every finding cites the offending quad.
    """
    ns = config.ontology_namespace
    quads = [q for quadset in snapshot.values() for q in quadset]
    types: dict[str, set[str]] = {}
    for q in quads:
        if q.p == RDF_TYPE and isinstance(q.o, str) and q.o.startswith(ns):
            name = q.o[len(ns):]
            if name in ontology.classes:
                types.setdefault(q.s, set()).add(name)

    findings = set()
    for q in quads:
        if not q.p.startswith(ns):
            continue
        prop = ontology.property(q.p[len(ns):])
        if prop is None:
            continue
        subject_types = types.get(q.s)
        if subject_types and not any(ontology.is_subclass(t, prop.domain) for t in subject_types):
            findings.add(("domain", quad_line(q), prop.domain, tuple(sorted(subject_types))))
        if prop.literal:
            if isinstance(q.o, Literal):
                if q.o.kind != prop.range:
                    findings.add(("range", quad_line(q), prop.range, (q.o.kind,)))
            else:
                findings.add(("range", quad_line(q), prop.range, ("iri",)))
        else:
            if isinstance(q.o, Literal):
                findings.add(("range", quad_line(q), prop.range, ("literal",)))
            else:
                object_types = types.get(q.o)
                if object_types and not any(ontology.is_subclass(t, prop.range) for t in object_types):
                    findings.add(("range", quad_line(q), prop.range, tuple(sorted(object_types))))

    return [
        {"expected": expected, "found": list(found), "problem": problem, "quad": line}
        for problem, line, expected, found in sorted(findings, key=lambda f: (f[1], f[0], f[2]))
    ]


def conciseness(curation: CurationStore, rules: list[MatchRule]) -> list[dict]:
    """Masters the rules still consider the same identity."""
    return [
        {
            "entity_type": c.entity_type,
            "key": list(c.key),
            "masters": list(c.masters),
            "rule_index": c.rule_index,
        }
        for c in curation.duplicate_candidates(rules)
    ]
