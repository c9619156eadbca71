"""Declarative mappings from template columns to graph statements.

A mapping names, per source table, which class its rows describe, how the
subject IRI is built, and one link per column worth keeping. Mappings are
data (JSON), validated fully against both the template and the target
schema before any transformation runs: a mapping either loads completely
or not at all, with every problem reported in one pass.

Subject IRI templates are small path expressions:

    template  = segment *("/" segment)
    segment   = "slug(" expr ")" | "hash(" expr *("," expr) ")"
              | "node(" NAME ")" | "local(" NAME ")" | expr
    expr      = *( "{column:" NAME "}" | TEXT )

A bare expr segment percent-encodes substituted cell values; slug() makes
the readable lower-case form, hash() a content hash, node() a row-scoped
intermediate node, and local(), only alone, the IRI of the row's local
entity instance. The evaluated template is appended to the configured
prefix and the class name, except for local(), which is already a full IRI.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DocumentParseError
from .ontology import LITERAL_RANGES, Ontology
from .records import Template, resolve_entity_group
from .values import supported_formats

LINK_TARGETS = ("literal", "vocab-term", "entity-ref", "entity")

_SEGMENT_FUNCTIONS = ("slug", "hash", "node", "local")

# characters allowed verbatim in literal template text (IRI path segment safe)
_SAFE_TEXT = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-._~")


@dataclass(frozen=True)
class Part:
    kind: str  # "text" | "column"
    value: str


Expr = tuple[Part, ...]


@dataclass(frozen=True)
class Segment:
    kind: str  # "literal" | "slug" | "hash" | "node" | "local"
    exprs: tuple[Expr, ...]

    def columns(self) -> list[str]:
        return [p.value for expr in self.exprs for p in expr if p.kind == "column"]


@dataclass(frozen=True)
class UriTemplate:
    source: str
    segments: tuple[Segment, ...]

    def columns(self) -> list[str]:
        return [c for seg in self.segments for c in seg.columns()]

    @property
    def is_local(self) -> bool:
        return len(self.segments) == 1 and self.segments[0].kind == "local"


def _split_top(text: str, sep: str) -> list[str]:
    """Split on ``sep`` outside braces and parentheses."""
    out = []
    depth = 0
    current = []
    for ch in text:
        if ch in "({":
            depth += 1
        elif ch in ")}":
            depth -= 1
        if ch == sep and depth == 0:
            out.append("".join(current))
            current = []
        else:
            current.append(ch)
    out.append("".join(current))
    return out


def _parse_expr(text: str) -> Expr:
    parts: list[Part] = []
    rest = text
    while rest:
        if rest.startswith("{"):
            end = rest.find("}")
            if end < 0:
                raise DocumentParseError(f"unclosed '{{' in uri template expression {text!r}")
            ref = rest[1:end]
            if not ref.startswith("column:"):
                raise DocumentParseError(f"unknown substitution {{{ref}}} in uri template")
            name = ref[len("column:"):]
            if name == "":
                raise DocumentParseError("empty column name in uri template")
            parts.append(Part("column", name))
            rest = rest[end + 1:]
        else:
            cut = rest.find("{")
            literal = rest if cut < 0 else rest[:cut]
            if "}" in literal:
                raise DocumentParseError(f"stray '}}' in uri template expression {text!r}")
            parts.append(Part("text", literal))
            rest = "" if cut < 0 else rest[cut:]
    return tuple(parts)


def parse_uri_template(source: str) -> UriTemplate:
    if source.strip() == "":
        raise DocumentParseError("empty uri template")
    segments: list[Segment] = []
    for raw_segment in _split_top(source, "/"):
        seg = raw_segment.strip()
        if seg == "":
            raise DocumentParseError(f"empty path segment in uri template {source!r}")
        matched = None
        for fn in _SEGMENT_FUNCTIONS:
            if seg.startswith(fn + "(") and seg.endswith(")"):
                matched = fn
                inner = seg[len(fn) + 1:-1]
                break
        if matched is None:
            expr = _parse_expr(seg)
            for part in expr:
                if part.kind == "text" and not set(part.value) <= _SAFE_TEXT:
                    raise DocumentParseError(
                        f"literal text {part.value!r} in uri template is not IRI-safe; wrap it in slug()"
                    )
            segments.append(Segment("literal", (expr,)))
            continue
        if matched in ("node", "local"):
            name = inner.strip()
            if name == "":
                raise DocumentParseError(f"{matched}() needs a name in uri template {source!r}")
            segments.append(Segment(matched, ((Part("text", name),),)))
        elif matched == "slug":
            if inner.strip() == "":
                raise DocumentParseError(f"slug() needs an expression in uri template {source!r}")
            segments.append(Segment("slug", (_parse_expr(inner),)))
        else:  # hash
            exprs = tuple(_parse_expr(arg.strip()) for arg in _split_top(inner, ","))
            if not exprs or all(not e for e in exprs):
                raise DocumentParseError(f"hash() needs arguments in uri template {source!r}")
            segments.append(Segment("hash", exprs))
    template = UriTemplate(source=source, segments=tuple(segments))
    if any(s.kind == "local" for s in template.segments) and not template.is_local:
        raise DocumentParseError("local() must be the whole uri template")
    return template


@dataclass(frozen=True)
class NestedMap:
    class_name: str
    uri: UriTemplate
    links: tuple["LinkSpec", ...]


@dataclass(frozen=True)
class LinkSpec:
    property: str
    target: str
    column: str | None = None
    literal_kind: str | None = None  # resolved: always set for literal targets
    source_format: str | None = None
    entity: NestedMap | None = None


@dataclass(frozen=True)
class EntityMap:
    table: str
    class_name: str
    uri: UriTemplate
    links: tuple[LinkSpec, ...]


@dataclass(frozen=True)
class MappingSpec:
    template_id: str
    entities: tuple[EntityMap, ...]


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_obj(self) -> dict:
        return {"errors": list(self.errors), "ok": self.ok, "warnings": list(self.warnings)}


def load_mapping(doc: dict, ontology: Ontology, template: Template):
    """Validate a mapping document; (spec, report), spec None on any error."""
    report = ValidationReport()
    if not isinstance(doc, dict):
        report.errors.append("mapping document must be an object")
        return None, report
    template_id = doc.get("template")
    if template_id != template.id:
        report.errors.append(f"mapping names template {template_id!r}, expected {template.id!r}")
    entity_docs = doc.get("entities")
    if not isinstance(entity_docs, list) or not entity_docs:
        report.errors.append("mapping must hold a non-empty 'entities' list")
        return None, report

    entities = []
    for i, obj in enumerate(entity_docs):
        where = f"entities[{i}]"
        if not isinstance(obj, dict):
            report.errors.append(f"{where}: must be an object")
            continue
        table_name = obj.get("table", "")
        table = template.table(table_name)
        if table is None:
            report.errors.append(f"{where}: template has no table {table_name!r}")
            continue
        class_name = obj.get("class", "")
        if not ontology.is_class(class_name):
            report.errors.append(f"{where}: unknown class {class_name!r}")
            continue
        uri = _check_uri(obj.get("uri", ""), template, table_name, where, report)
        links = _check_links(obj.get("links", []), ontology, template, table_name, class_name, where, report)
        if uri is not None and links is not None:
            entities.append(EntityMap(table=table.name, class_name=class_name, uri=uri, links=links))

    mapped_columns: dict[str, set[str]] = {}
    for e in entities:
        used = mapped_columns.setdefault(e.table, set())
        used.update(e.uri.columns())
        _collect_link_columns(e.links, used)
    for table in template.tables:
        used = mapped_columns.get(table.name, set())
        for col in table.columns:
            if col.kind.kind == "entity-ref":
                continue  # carried by curation even when unmapped
            if col.name not in used:
                report.warnings.append(f"column {table.name}.{col.name} is not mapped")

    if not report.ok:
        return None, report
    return MappingSpec(template_id=template.id, entities=tuple(entities)), report


def _collect_link_columns(links: tuple[LinkSpec, ...], used: set[str]):
    for link in links:
        if link.column is not None:
            used.add(link.column)
        if link.entity is not None:
            used.update(link.entity.uri.columns())
            _collect_link_columns(link.entity.links, used)


def _check_uri(source, template: Template, table_name: str, where: str, report: ValidationReport):
    if not isinstance(source, str):
        report.errors.append(f"{where}: uri template must be a string")
        return None
    try:
        uri = parse_uri_template(source)
    except DocumentParseError as exc:
        report.errors.append(f"{where}: {exc}")
        return None
    table = template.table(table_name)
    for column in uri.columns():
        if table.column(column) is None:
            report.errors.append(f"{where}: uri references unknown column {column!r}")
            return None
    if uri.is_local:
        group_name = uri.segments[0].exprs[0][0].value
        if resolve_entity_group(template, table_name, group_name) is None:
            report.errors.append(f"{where}: local() references no entity group {group_name!r} in {table_name!r}")
            return None
    return uri


def _check_links(link_docs, ontology: Ontology, template: Template, table_name: str, class_name: str, where: str, report: ValidationReport):
    if not isinstance(link_docs, list):
        report.errors.append(f"{where}: links must be a list")
        return None
    table = template.table(table_name)
    links = []
    failed = False
    for j, obj in enumerate(link_docs):
        loc = f"{where}.links[{j}]"
        if not isinstance(obj, dict):
            report.errors.append(f"{loc}: must be an object")
            failed = True
            continue
        prop = ontology.property(obj.get("property", ""))
        if prop is None:
            report.errors.append(f"{loc}: unknown property {obj.get('property')!r}")
            failed = True
            continue
        if not ontology.is_subclass(class_name, prop.domain):
            report.errors.append(
                f"{loc}: property {prop.name!r} has domain {prop.domain!r}; {class_name!r} is no subclass of it"
            )
            failed = True
            continue
        target = obj.get("target", "")
        if target not in LINK_TARGETS:
            report.errors.append(f"{loc}: unknown target {target!r}")
            failed = True
            continue

        column = obj.get("column")
        if target in ("literal", "vocab-term", "entity-ref"):
            col = table.column(column) if isinstance(column, str) else None
            if col is None:
                report.errors.append(f"{loc}: target {target!r} needs a column of table {table_name!r}, got {column!r}")
                failed = True
                continue
            if target == "vocab-term" and col.kind.kind != "vocab-term":
                report.errors.append(f"{loc}: column {column!r} is {col.kind.token()!r}, not a vocabulary column")
                failed = True
                continue
            if target == "entity-ref" and col.kind.kind != "entity-ref":
                report.errors.append(f"{loc}: column {column!r} is {col.kind.token()!r}, not an entity reference")
                failed = True
                continue

        literal_kind = obj.get("literal_kind")
        source_format = obj.get("source_format")
        if target == "literal":
            if prop.range not in LITERAL_RANGES:
                report.errors.append(f"{loc}: property {prop.name!r} ranges over {prop.range!r}, not a literal")
                failed = True
                continue
            if literal_kind is not None and literal_kind != prop.range:
                report.errors.append(
                    f"{loc}: literal_kind {literal_kind!r} conflicts with property range {prop.range!r}"
                )
                failed = True
                continue
            literal_kind = prop.range
            if source_format is not None and source_format not in supported_formats(literal_kind):
                report.errors.append(f"{loc}: unsupported source_format {source_format!r} for {literal_kind!r}")
                failed = True
                continue
        else:
            if prop.range in LITERAL_RANGES:
                report.errors.append(f"{loc}: property {prop.name!r} ranges over a literal; target must be 'literal'")
                failed = True
                continue
            if source_format is not None or literal_kind is not None:
                report.errors.append(f"{loc}: literal_kind/source_format apply to literal targets only")
                failed = True
                continue

        entity = None
        if target == "entity":
            nested = obj.get("entity")
            if not isinstance(nested, dict):
                report.errors.append(f"{loc}: target 'entity' needs a nested entity object")
                failed = True
                continue
            nested_class = nested.get("class", "")
            if not ontology.is_class(nested_class):
                report.errors.append(f"{loc}: unknown nested class {nested_class!r}")
                failed = True
                continue
            if not ontology.is_subclass(nested_class, prop.range):
                report.errors.append(
                    f"{loc}: nested class {nested_class!r} is no subclass of range {prop.range!r}"
                )
                failed = True
                continue
            nested_uri = _check_uri(nested.get("uri", ""), template, table_name, loc, report)
            nested_links = _check_links(
                nested.get("links", []), ontology, template, table_name, nested_class, loc, report
            )
            if nested_uri is None or nested_links is None:
                failed = True
                continue
            entity = NestedMap(class_name=nested_class, uri=nested_uri, links=nested_links)
        elif obj.get("entity") is not None:
            report.errors.append(f"{loc}: nested entity applies to target 'entity' only")
            failed = True
            continue

        links.append(
            LinkSpec(
                property=prop.name,
                target=target,
                column=table.column(column).name if isinstance(column, str) and table.column(column) else None,
                literal_kind=literal_kind,
                source_format=source_format,
                entity=entity,
            )
        )
    if failed:
        return None
    return tuple(links)
