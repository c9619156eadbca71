"""Deriving quads from published records and curated identities.

The derivation is a pure function of (record content, template, mapping,
curation state, configuration): no clocks, no randomness, no iteration-order
dependence. Intermediate nodes that other systems would mint as random ids
are derived here from the row position instead, so re-running a transform
reproduces the previous output byte for byte.

Graph layout: each record owns one named graph; curated identity links,
the term hierarchy, its materialised closure, and provenance each own a
dedicated graph. Record graphs carry only what the record says (missing
cells produce no quads of any kind), which is what makes the reserved
"Unknown" bucket at query time trustworthy.

Every derived subject points (in the provenance graph) to a node naming the
record, table, row, and columns it came from, so any statement can be traced
back to verbatim transcription.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import EngineConfig
from .curation import CurationStore
from .errors import EmptySlug
from .graphstore import Literal, Quad
from .mapping import LinkSpec, MappingSpec, Segment, UriTemplate
from .naming import (
    RDF_TYPE,
    content_hash,
    encode_segment,
    local_instance_id,
    local_instance_iri,
    node_id,
    provenance_node_iri,
    record_iri,
    short_hash,
    slug,
    slug_or_hash,
)
from .ontology import Ontology
from .records import (
    Record,
    Template,
    cell_raw,
    original_table_name,
    resolve_entity_group,
    table_rows,
)
from .values import parse_typed

CURATION_GRAPH = "curation-links"
HIERARCHY_GRAPH = "term-hierarchy"
MATERIALISED_GRAPH = "materialised"
PROVENANCE_GRAPH = "provenance"

DEDICATED_GRAPHS = (CURATION_GRAPH, HIERARCHY_GRAPH, MATERIALISED_GRAPH, PROVENANCE_GRAPH)


def record_graph_iri(config: EngineConfig, record_id: str) -> str:
    return config.graph_namespace + "record/" + encode_segment(record_id)


def dedicated_graph_iri(config: EngineConfig, name: str) -> str:
    return config.graph_namespace + name


def _art(config: EngineConfig, name: str) -> str:
    return config.artifact_namespace + name


def _ont(config: EngineConfig, name: str) -> str:
    return config.ontology_namespace + name


# --- term IRIs --------------------------------------------------------------


def _disambiguate(names: list[str], slugs: dict[str, str]) -> dict[str, str]:
    """Suffix colliding slugs with a content hash; empty slugs become hashes."""
    groups: dict[str, list[str]] = {}
    for name in names:
        groups.setdefault(slugs[name], []).append(name)
    out = {}
    for slugged, members in groups.items():
        for name in members:
            if slugged == "":
                out[name] = content_hash(name)
            elif len(members) > 1:
                out[name] = slugged + "-" + short_hash(name, length=12)
            else:
                out[name] = slugged
    return out


def _safe_slug(text: str) -> str:
    try:
        return slug(text)
    except EmptySlug:
        return ""


class TermIriResolver:
    """Stable IRIs for vocabulary terms.

    Readability first: lower-case slugs of the raw term. Distinctness
    always: within a vocabulary, terms whose slugs collide all get a hash
    suffix, and a term that slugs to nothing is named by hash alone. The
    assignment depends only on the set of terms, not on insertion order.
    """

    def __init__(self, config: EngineConfig, vocab_terms: dict[str, list[str]]):
        self._prefix = config.uri_prefix
        vocab_names = sorted(vocab_terms)
        self._vocab_segment = _disambiguate(vocab_names, {v: _safe_slug(v) for v in vocab_names})
        self._term_segment: dict[str, dict[str, str]] = {}
        for vocab in vocab_names:
            raws = sorted(vocab_terms[vocab])
            self._term_segment[vocab] = _disambiguate(raws, {r: _safe_slug(r) for r in raws})

    def term_iri(self, vocabulary: str, raw: str) -> str:
        vseg = self._vocab_segment.get(vocabulary, slug_or_hash(vocabulary))
        seg = self._term_segment.get(vocabulary, {}).get(raw)
        if seg is None:
            seg = slug_or_hash(raw)
        return f"{self._prefix}/vocabulary/{vseg}/{seg}"


def build_term_resolver(config: EngineConfig, curation: CurationStore) -> TermIriResolver:
    vocab_terms = {name: list(curation.terms_of(name)) for name in curation.vocabularies()}
    return TermIriResolver(config, vocab_terms)


# --- subject IRIs -----------------------------------------------------------


@dataclass
class RowContext:
    config: EngineConfig
    record: Record
    template: Template
    table: str  # current table name
    anchor_table: str
    row: int

    def raw(self, column: str) -> str:
        return cell_raw(self.record, self.template, self.table, self.row, column)


@dataclass
class TransformLog:
    """Deterministic notes about fallbacks taken during derivation."""

    uri_fallbacks: list[dict] = field(default_factory=list)

    def fallback(self, ctx: RowContext, uri: UriTemplate, segment_index: int):
        self.uri_fallbacks.append(
            {
                "record": ctx.record.id,
                "row": ctx.row,
                "segment": segment_index,
                "table": ctx.anchor_table,
                "uri": uri.source,
            }
        )


def _expand(ctx: RowContext, expr) -> str:
    return "".join(p.value if p.kind == "text" else ctx.raw(p.value) for p in expr)


def _eval_segment(ctx: RowContext, segment: Segment) -> str:
    if segment.kind == "literal":
        parts = []
        for p in segment.exprs[0]:
            parts.append(p.value if p.kind == "text" else encode_segment(ctx.raw(p.value)))
        value = "".join(parts)
        if value == "":
            raise EmptySlug("empty path segment")
        return value
    if segment.kind == "slug":
        return slug(_expand(ctx, segment.exprs[0]))
    if segment.kind == "hash":
        return content_hash(*(_expand(ctx, e) for e in segment.exprs))
    if segment.kind == "node":
        return node_id(ctx.record.id, ctx.anchor_table, ctx.row, segment.exprs[0][0].value)
    raise AssertionError(segment.kind)


def _local_subject(ctx: RowContext, uri: UriTemplate) -> str | None:
    group = resolve_entity_group(ctx.template, ctx.table, uri.segments[0].exprs[0][0].value)
    if group is None or all(ctx.raw(c) == "" for c in group.columns):
        return None
    lid = local_instance_id(group.entity_type, ctx.record.id, ctx.anchor_table, ctx.row, group.anchor_columns)
    return local_instance_iri(ctx.config.uri_prefix, group.entity_type, lid)


def eval_subject(ctx: RowContext, class_name: str, uri: UriTemplate, log: TransformLog) -> str | None:
    """Subject IRI for one row, or None when the row carries no identity.

    A segment that evaluates to nothing (empty cells, all-punctuation slug)
    falls back to a position hash, so a partially filled row still gets a
    stable subject; the fallback is logged.
    """
    if uri.is_local:
        return _local_subject(ctx, uri)
    segments = []
    for i, segment in enumerate(uri.segments):
        try:
            segments.append(_eval_segment(ctx, segment))
        except EmptySlug:
            log.fallback(ctx, uri, i)
            segments.append(content_hash(ctx.record.id, ctx.anchor_table, str(ctx.row), uri.source, str(i)))
    return f"{ctx.config.uri_prefix}/{slug_or_hash(class_name)}/" + "/".join(segments)


# --- record graphs ----------------------------------------------------------


def _link_fires(ctx: RowContext, link: LinkSpec) -> bool:
    if link.target == "entity":
        return _map_materializes(ctx, link.entity)
    if link.target == "entity-ref":
        group = _ref_group(ctx, link)
        return group is not None and any(ctx.raw(c) != "" for c in group.columns)
    return ctx.raw(link.column) != ""


def _ref_group(ctx: RowContext, link: LinkSpec):
    col = ctx.template.table(ctx.table).column(link.column)
    key = col.entity_group if col.entity_group is not None else col.name
    return resolve_entity_group(ctx.template, ctx.table, key)


def _map_materializes(ctx: RowContext, m) -> bool:
    uri_columns = m.uri.columns()
    if m.uri.is_local:
        group = resolve_entity_group(ctx.template, ctx.table, m.uri.segments[0].exprs[0][0].value)
        return group is not None and any(ctx.raw(c) != "" for c in group.columns)
    if any(ctx.raw(c) != "" for c in uri_columns):
        return True
    return any(_link_fires(ctx, link) for link in m.links)


def _anchor_column(ctx: RowContext, column: str) -> str:
    col = ctx.template.table(ctx.table).column(column)
    return (col.former_names[0] if col.former_names else col.name) if col is not None else column


def _emit_subject(
    ctx: RowContext,
    class_name: str,
    uri: UriTemplate,
    links: tuple[LinkSpec, ...],
    ontology: Ontology,
    resolver: TermIriResolver,
    log: TransformLog,
    graph: str,
    prov_graph: str,
    out: list[Quad],
    prov: list[Quad],
) -> str | None:
    if not _map_materializes(ctx, _Probe(uri, links)):
        return None
    subject = eval_subject(ctx, class_name, uri, log)
    if subject is None:
        return None
    config = ctx.config
    out.append(Quad(subject, RDF_TYPE, _ont(config, class_name), graph))
    columns = [c for c in uri.columns() if ctx.raw(c) != ""]
    if uri.is_local:
        group = resolve_entity_group(ctx.template, ctx.table, uri.segments[0].exprs[0][0].value)
        columns = [c for c in group.columns if ctx.raw(c) != ""]
    for link in links:
        if not _link_fires(ctx, link):
            continue
        prop_iri = _ont(config, link.property)
        if link.target == "literal":
            raw = ctx.raw(link.column)
            columns.append(link.column)
            parsed = parse_typed(raw, link.literal_kind, link.source_format)
            if parsed is None:
                out.append(Quad(subject, prop_iri, Literal(raw, "text"), graph))
            else:
                out.append(Quad(subject, prop_iri, Literal(parsed, link.literal_kind), graph))
                if parsed != raw:
                    out.append(Quad(subject, _art(config, "verbatim/" + link.property), Literal(raw, "text"), graph))
        elif link.target == "vocab-term":
            raw = ctx.raw(link.column)
            columns.append(link.column)
            vocabulary = ctx.template.table(ctx.table).column(link.column).kind.ref
            term = resolver.term_iri(vocabulary, raw)
            out.append(Quad(subject, prop_iri, term, graph))
            out.append(Quad(term, RDF_TYPE, _ont(config, ontology.property(link.property).range), graph))
        elif link.target == "entity-ref":
            group = _ref_group(ctx, link)
            lid = local_instance_id(
                group.entity_type, ctx.record.id, ctx.anchor_table, ctx.row, group.anchor_columns
            )
            out.append(
                Quad(subject, prop_iri, local_instance_iri(config.uri_prefix, group.entity_type, lid), graph)
            )
            columns.extend(c for c in group.columns if ctx.raw(c) != "")
        else:  # entity
            nested_subject = _emit_subject(
                ctx, link.entity.class_name, link.entity.uri, link.entity.links,
                ontology, resolver, log, graph, prov_graph, out, prov,
            )
            if nested_subject is not None:
                out.append(Quad(subject, prop_iri, nested_subject, graph))

    prov_node = provenance_node_iri(config.uri_prefix, ctx.record.id, ctx.anchor_table, ctx.row, subject)
    rec_iri = record_iri(config.uri_prefix, ctx.record.id)
    prov.append(Quad(subject, _art(config, "provenance"), prov_node, prov_graph))
    prov.append(Quad(prov_node, _art(config, "from-record"), rec_iri, prov_graph))
    prov.append(Quad(prov_node, _art(config, "in-table"), Literal(ctx.anchor_table, "text"), prov_graph))
    prov.append(Quad(prov_node, _art(config, "at-row"), Literal(str(ctx.row), "integer"), prov_graph))
    for column in sorted({_anchor_column(ctx, c) for c in columns}):
        prov.append(Quad(prov_node, _art(config, "from-column"), Literal(column, "text"), prov_graph))
    return subject


@dataclass(frozen=True)
class _Probe:
    """Duck-typed stand-in so materialization checks work for maps and links."""

    uri: UriTemplate
    links: tuple[LinkSpec, ...]


def transform_record(
    record: Record,
    template: Template,
    spec: MappingSpec,
    ontology: Ontology,
    resolver: TermIriResolver,
    config: EngineConfig,
    log: TransformLog,
) -> tuple[list[Quad], list[Quad]]:
    """One record's graph plus its provenance quads."""
    graph = record_graph_iri(config, record.id)
    prov_graph = dedicated_graph_iri(config, PROVENANCE_GRAPH)
    out: list[Quad] = []
    prov: list[Quad] = []
    emitted_any = False
    for entity_map in spec.entities:
        rows = table_rows(record, template, entity_map.table)
        table_spec = template.table(entity_map.table)
        anchor_table = original_table_name(table_spec)
        for row_index, row in enumerate(rows):
            if row.deleted:
                continue
            ctx = RowContext(
                config=config,
                record=record,
                template=template,
                table=entity_map.table,
                anchor_table=anchor_table,
                row=row_index,
            )
            subject = _emit_subject(
                ctx, entity_map.class_name, entity_map.uri, entity_map.links,
                ontology, resolver, log, graph, prov_graph, out, prov,
            )
            emitted_any = emitted_any or subject is not None
    if emitted_any or prov:
        rec_iri = record_iri(config.uri_prefix, record.id)
        prov.append(Quad(rec_iri, _art(config, "record-id"), Literal(record.id, "text"), prov_graph))
    return out, prov


# --- curation graphs --------------------------------------------------------


def master_iris(curation: CurationStore, config: EngineConfig) -> dict[tuple[str, str], str]:
    """IRI per master that carries identity data worth publishing.

    Masters are named by their canonical attributes (preferred values when
    set, else the smallest member local's values) joined in role order;
    name collisions get a hash suffix keyed by the master id, and nameless
    masters are named by master id hash alone.
    """
    out: dict[tuple[str, str], str] = {}
    for etype in curation.entity_types():
        masters = curation.masters_of(etype)
        publishable = []
        for mid in sorted(masters):
            master = masters[mid]
            if len(master.members) > 1 or master.preferred_attributes or master.enrichments:
                publishable.append(mid)
        slugs = {}
        for mid in publishable:
            attrs = curation.canonical_attributes(etype, mid)
            name = " ".join(attrs[role] for role in sorted(attrs) if attrs[role] != "")
            slugs[mid] = _safe_slug(name)
        groups: dict[str, list[str]] = {}
        for mid in publishable:
            groups.setdefault(slugs[mid], []).append(mid)
        type_segment = slug_or_hash(etype)
        for slugged, members in groups.items():
            for mid in members:
                if slugged == "":
                    segment = content_hash(mid)
                elif len(members) > 1:
                    segment = slugged + "-" + short_hash(mid, length=12)
                else:
                    segment = slugged
                out[(etype, mid)] = f"{config.uri_prefix}/{type_segment}/{segment}"
    return out


def curation_link_quads(curation: CurationStore, config: EngineConfig) -> list[Quad]:
    graph = dedicated_graph_iri(config, CURATION_GRAPH)
    iris = master_iris(curation, config)
    quads = []
    for etype in curation.entity_types():
        masters = curation.masters_of(etype)
        for mid in sorted(masters):
            iri = iris.get((etype, mid))
            if iri is None:
                continue
            master = masters[mid]
            for lid in sorted(master.members):
                local = local_instance_iri(config.uri_prefix, etype, lid)
                quads.append(Quad(iri, _art(config, "same-identity"), local, graph))
            for role in sorted(master.preferred_attributes):
                quads.append(
                    Quad(
                        iri,
                        _art(config, "preferred/" + slug_or_hash(role)),
                        Literal(master.preferred_attributes[role], "text"),
                        graph,
                    )
                )
            for key in sorted(master.enrichments):
                quads.append(
                    Quad(
                        iri,
                        _art(config, "enrichment/" + slug_or_hash(key)),
                        Literal(master.enrichments[key], "text"),
                        graph,
                    )
                )
    return quads


def hierarchy_quads(curation: CurationStore, resolver: TermIriResolver, config: EngineConfig) -> list[Quad]:
    graph = dedicated_graph_iri(config, HIERARCHY_GRAPH)
    quads = []
    for vocabulary in curation.vocabularies():
        terms = curation.terms_of(vocabulary)
        for raw in sorted(terms):
            term = terms[raw]
            iri = resolver.term_iri(vocabulary, raw)
            if term.preferred is not None:
                quads.append(Quad(iri, _art(config, "preferred-term"), Literal(term.preferred, "text"), graph))
            for broader in sorted(term.broader):
                quads.append(Quad(iri, _art(config, "broader-term"), resolver.term_iri(vocabulary, broader), graph))
    return quads


def materialised_quads(curation: CurationStore, resolver: TermIriResolver, config: EngineConfig) -> list[Quad]:
    """Transitive closure of the broader-term hierarchy, one quad per
    reachable ancestor at any depth."""
    graph = dedicated_graph_iri(config, MATERIALISED_GRAPH)
    quads = []
    for vocabulary in curation.vocabularies():
        terms = curation.terms_of(vocabulary)
        closure: dict[str, set[str]] = {}

        def ancestors_of(raw: str) -> set[str]:
            known = closure.get(raw)
            if known is not None:
                return known
            closure[raw] = set()  # acyclic by construction; guards lookups
            found: set[str] = set()
            for parent in terms[raw].broader if raw in terms else ():
                found.add(parent)
                found |= ancestors_of(parent)
            closure[raw] = found
            return found

        for raw in sorted(terms):
            iri = resolver.term_iri(vocabulary, raw)
            for ancestor in sorted(ancestors_of(raw)):
                quads.append(
                    Quad(iri, _art(config, "broader-transitive"), resolver.term_iri(vocabulary, ancestor), graph)
                )
    return quads
