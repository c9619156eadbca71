"""The workspace: every store under one data directory, one API over all.

Directory layout:

    config.json            workspace configuration
    templates/  records/   versioned documents (record store)
    curation/              identity catalogue
    ontology.json          target schema
    mappings/<template>.json
    graphs/  commits.log   derived quads (graph store)

The derivation path is publish -> ingest -> transform: publishing a record
feeds curation, transformation derives graphs from published records and
curation state. Transformation replaces exactly the graphs in scope; a
one-record refresh leaves every other record's graph byte-identical.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from .canonical import canonical_json_bytes
from .config import EngineConfig
from .curation import CurationStore, MatchRule, match_rules_from_doc
from .errors import (
    DocumentParseError,
    EngineError,
    MissingMapping,
    RecordNotFound,
    TemplateInvalid,
    UnknownIri,
)
from .graphstore import GraphStore, Literal, parse_nquads, run_query
from .mapping import MappingSpec, ValidationReport, load_mapping
from .naming import local_instance_iri, record_iri
from .ontology import Ontology, ontology_from_doc, ontology_from_text, ontology_to_doc
from .quality import completeness, conciseness, schema_consistency, value_consistency
from .records import (
    Record,
    Template,
    cell_raw,
    change_from_doc,
    record_from_doc,
    template_from_doc,
)
from .store import RecordStore
from .transform import (
    CURATION_GRAPH,
    HIERARCHY_GRAPH,
    MATERIALISED_GRAPH,
    PROVENANCE_GRAPH,
    TransformLog,
    build_term_resolver,
    curation_link_quads,
    dedicated_graph_iri,
    hierarchy_quads,
    master_iris,
    materialised_quads,
    record_graph_iri,
    transform_record,
)

CONFIG_FILE = "config.json"


class Workspace:
    def __init__(self, data_dir: Path, config: EngineConfig):
        self.data_dir = Path(data_dir)
        self.config = config
        self.records = RecordStore(self.data_dir)
        self.curation = CurationStore(self.data_dir / "curation")
        self.graphs = GraphStore(self.data_dir)
        self.mappings_dir = self.data_dir / "mappings"
        self.mappings_dir.mkdir(parents=True, exist_ok=True)
        self._ontology_path = self.data_dir / "ontology.json"
        self._transform_lock = threading.Lock()

    # --- lifecycle ---------------------------------------------------------

    @classmethod
    def init(cls, data_dir: Path, config: EngineConfig | None = None) -> "Workspace":
        data_dir = Path(data_dir)
        path = data_dir / CONFIG_FILE
        if path.exists():
            raise EngineError(f"workspace already initialized at {data_dir}", code="already-initialized")
        data_dir.mkdir(parents=True, exist_ok=True)
        config = config or EngineConfig()
        path.write_bytes(canonical_json_bytes(config.to_doc()))
        return cls(data_dir, config)

    @classmethod
    def open(cls, data_dir: Path) -> "Workspace":
        data_dir = Path(data_dir)
        path = data_dir / CONFIG_FILE
        if not path.exists():
            raise EngineError(f"no workspace at {data_dir} (run init first)", code="not-initialized")
        with open(path, "rb") as fh:
            config = EngineConfig.from_doc(json.load(fh))
        return cls(data_dir, config)

    # --- templates and records ----------------------------------------------

    def import_template(self, doc: dict) -> Template:
        template = template_from_doc(doc)
        entity_types = set(self.config.entity_types)
        vocabularies = set(self.config.vocabularies) if self.config.vocabularies else None
        problems = template.check_references(entity_types, vocabularies)
        if problems:
            raise TemplateInvalid("template references unknown names: " + "; ".join(problems))
        self.records.put_template(template)
        return template

    def evolve_template(self, template_id: str, change_doc: dict) -> Template:
        return self.records.evolve_template(template_id, change_from_doc(change_doc))

    def import_record(self, doc: dict, author: str = "", timestamp: str = ""):
        record = record_from_doc(doc)
        return record, self.records.put_record(record, author=author, timestamp=timestamp)

    def publish(self, record_id: str, version: int | None = None) -> dict:
        record, mentions = self.records.publish_record(record_id, version)
        self.curation.ingest(record_id, mentions)
        entities = sum(1 for m in mentions if m.kind == "entity")
        terms = sum(1 for m in mentions if m.kind == "term")
        return {
            "entities": entities,
            "record": record_id,
            "terms": terms,
            "version": self.records.published_version(record_id),
        }

    def publish_many(self, record_ids: list[str]) -> dict:
        """Publish latest versions in bulk; curation state is saved once."""
        batch = []
        entities = terms = 0
        for record_id in record_ids:
            _, mentions = self.records.publish_record(record_id, None)
            batch.append((record_id, mentions))
            entities += sum(1 for m in mentions if m.kind == "entity")
            terms += sum(1 for m in mentions if m.kind == "term")
        self.curation.ingest_many(batch)
        return {"entities": entities, "records": len(batch), "terms": terms}

    # --- schema and mappings -------------------------------------------------

    def import_ontology(self, text: str) -> Ontology:
        ontology = ontology_from_text(text)
        self._ontology_path.write_bytes(canonical_json_bytes(ontology_to_doc(ontology)))
        return ontology

    def ontology(self) -> Ontology:
        if not self._ontology_path.exists():
            raise MissingMapping("no schema document imported", code="missing-ontology")
        with open(self._ontology_path, "rb") as fh:
            return ontology_from_doc(json.load(fh))

    def import_mapping(self, doc: dict) -> ValidationReport:
        template_id = doc.get("template") if isinstance(doc, dict) else None
        if not isinstance(template_id, str):
            raise DocumentParseError("mapping document must name its template")
        template = self.records.get_template(template_id)
        spec, report = load_mapping(doc, self.ontology(), template)
        if spec is not None:
            path = self.mappings_dir / (template_id + ".json")
            path.write_bytes(canonical_json_bytes(doc))
        return report

    def mapping_for(self, template: Template) -> MappingSpec:
        path = self.mappings_dir / (template.id + ".json")
        if not path.exists():
            raise MissingMapping(f"no mapping for template {template.id!r}")
        with open(path, "rb") as fh:
            doc = json.load(fh)
        spec, report = load_mapping(doc, self.ontology(), template)
        if spec is None:
            raise MissingMapping(
                f"mapping for template {template.id!r} no longer validates: " + "; ".join(report.errors)
            )
        return spec

    def mapping_doc(self, template_id: str) -> dict:
        path = self.mappings_dir / (template_id + ".json")
        if not path.exists():
            raise MissingMapping(f"no mapping for template {template_id!r}")
        with open(path, "rb") as fh:
            return json.load(fh)

    # --- curation passthroughs -----------------------------------------------

    def auto_match(self, rules: list[MatchRule]):
        return self.curation.auto_match(rules)

    def auto_match_doc(self, doc) -> list:
        return self.auto_match(match_rules_from_doc(doc))

    # --- transformation --------------------------------------------------------

    def transform(self, record_ids: list[str] | None = None) -> dict:
        """Derive graphs; full derivation when no record ids are given.

        Record graphs in scope are replaced wholesale; the four dedicated
        graphs are always rebuilt. A full run also clears graphs of records
        that are no longer published.
        """
        with self._transform_lock:
            ontology = self.ontology()
            if record_ids is None:
                records = self.records.published_records()
            else:
                records = []
                for record_id in record_ids:
                    record = self.records.published_record(record_id)
                    if record is None:
                        raise RecordNotFound(f"record {record_id!r} has no published version", code="not-published")
                    records.append(record)

            templates: dict[str, Template] = {}
            specs: dict[str, MappingSpec] = {}
            for record in records:
                if record.template_id not in templates:
                    template = self.records.get_template(record.template_id)
                    templates[record.template_id] = template
                    specs[record.template_id] = self.mapping_for(template)

            resolver = build_term_resolver(self.config, self.curation)
            log = TransformLog()
            updates: dict[str, list] = {}
            new_prov: list = []
            scope_iris = set()
            for record in sorted(records, key=lambda r: r.id):
                template = templates[record.template_id]
                quads, prov = transform_record(
                    record, template, specs[record.template_id], ontology, resolver, self.config, log
                )
                updates[record_graph_iri(self.config, record.id)] = quads
                new_prov.extend(prov)
                scope_iris.add(record_iri(self.config.uri_prefix, record.id))

            if record_ids is None:
                prefix = self.config.graph_namespace + "record/"
                for graph in self.graphs.graph_names():
                    if graph.startswith(prefix) and graph not in updates:
                        updates[graph] = []

            updates[dedicated_graph_iri(self.config, CURATION_GRAPH)] = curation_link_quads(
                self.curation, self.config
            )
            updates[dedicated_graph_iri(self.config, HIERARCHY_GRAPH)] = hierarchy_quads(
                self.curation, resolver, self.config
            )
            updates[dedicated_graph_iri(self.config, MATERIALISED_GRAPH)] = materialised_quads(
                self.curation, resolver, self.config
            )
            prov_iri = dedicated_graph_iri(self.config, PROVENANCE_GRAPH)
            if record_ids is None:
                updates[prov_iri] = new_prov
            else:
                old = self.graphs.snapshot().get(prov_iri, frozenset())
                updates[prov_iri] = self._retained_provenance(old, scope_iris) + new_prov

            commit = self.graphs.replace_graphs(updates)
            report = {
                "commit": commit,
                "graphs": {iri: len(set(quads)) for iri, quads in sorted(updates.items())},
                "records": sorted(r.id for r in records),
                "uri_fallbacks": log.uri_fallbacks,
            }
            return report

    def _retained_provenance(self, old_quads, scope_record_iris: set) -> list:
        ns = self.config.artifact_namespace
        owner_of_node: dict[str, str] = {}
        for q in old_quads:
            if q.p == ns + "from-record" and isinstance(q.o, str):
                owner_of_node[q.s] = q.o
        kept = []
        for q in old_quads:
            if q.p == ns + "record-id":
                owner = q.s
            elif q.s in owner_of_node:
                owner = owner_of_node[q.s]
            elif isinstance(q.o, str) and q.o in owner_of_node:
                owner = owner_of_node[q.o]
            else:
                owner = None
            if owner is None or owner not in scope_record_iris:
                kept.append(q)
        return kept

    # --- queries and export -----------------------------------------------------

    def query(self, doc: dict) -> dict:
        return run_query(self.graphs.snapshot(), doc)

    def export_nquads(self, graphs=None) -> bytes:
        return self.graphs.export_nquads(graphs)

    def import_nquads(self, text: str) -> dict:
        """Replace the graphs named in an N-Quads document with its content."""
        quads = parse_nquads(text)
        updates: dict[str, list] = {}
        for q in quads:
            updates.setdefault(q.g, []).append(q)
        commit = self.graphs.replace_graphs(updates)
        return {"commit": commit, "graphs": {iri: len(qs) for iri, qs in sorted(updates.items())}}

    # --- provenance resolution ----------------------------------------------------

    def provenance_of(self, iri: str) -> dict:
        """Trace any produced IRI back to the cells it came from."""
        ns = self.config.artifact_namespace
        snapshot = self.graphs.snapshot()
        prov_graph = snapshot.get(dedicated_graph_iri(self.config, PROVENANCE_GRAPH), frozenset())

        nodes = [q.o for q in prov_graph if q.s == iri and q.p == ns + "provenance" and isinstance(q.o, str)]
        if nodes:
            return {"iri": iri, "kind": "subject", "anchors": self._anchors_from_nodes(prov_graph, nodes)}

        for etype in self.curation.entity_types():
            for mid, master_iri in self._master_iri_items(etype):
                if master_iri == iri:
                    return {"iri": iri, "kind": "identity", "anchors": self._anchors_from_curation(etype, mid)}
            for lid in self.curation.locals_of(etype):
                if local_instance_iri(self.config.uri_prefix, etype, lid) == iri:
                    return {"iri": iri, "kind": "occurrence", "anchors": self._anchors_from_local(etype, lid)}

        resolver = build_term_resolver(self.config, self.curation)
        for vocabulary in self.curation.vocabularies():
            for raw, term in self.curation.terms_of(vocabulary).items():
                if resolver.term_iri(vocabulary, raw) == iri:
                    return {
                        "iri": iri,
                        "kind": "term",
                        "vocabulary": vocabulary,
                        "raw": raw,
                        "anchors": [self._dereference(a) for a in term.appearances],
                    }

        for record_id in self.records.list_records():
            if record_iri(self.config.uri_prefix, record_id) == iri:
                version = self.records.published_version(record_id)
                return {"iri": iri, "kind": "record", "record": record_id, "published_version": version, "anchors": []}

        raise UnknownIri(f"{iri} was not produced by this workspace")

    def _master_iri_items(self, etype: str):
        iris = master_iris(self.curation, self.config)
        return [(mid, iri) for (t, mid), iri in iris.items() if t == etype]

    def _anchors_from_nodes(self, prov_graph, nodes: list[str]) -> list[dict]:
        ns = self.config.artifact_namespace
        record_ids = {
            q.s: q.o.lexical for q in prov_graph if q.p == ns + "record-id" and isinstance(q.o, Literal)
        }
        by_node: dict[str, list] = {}
        for q in prov_graph:
            by_node.setdefault(q.s, []).append(q)
        anchors = []
        for node in sorted(set(nodes)):
            record_id = table = None
            row = None
            columns = []
            for q in by_node.get(node, ()):
                if q.p == ns + "from-record" and isinstance(q.o, str):
                    record_id = record_ids.get(q.o)
                elif q.p == ns + "in-table" and isinstance(q.o, Literal):
                    table = q.o.lexical
                elif q.p == ns + "at-row" and isinstance(q.o, Literal):
                    row = int(q.o.lexical)
                elif q.p == ns + "from-column" and isinstance(q.o, Literal):
                    columns.append(q.o.lexical)
            if record_id is None or table is None or row is None:
                continue
            anchors.append(self._dereference_parts(record_id, table, row, tuple(sorted(columns))))
        return anchors

    def _anchors_from_curation(self, etype: str, master_id: str) -> list[dict]:
        return [self._dereference(a) for a in self.curation.appearances(etype, master_id)]

    def _anchors_from_local(self, etype: str, local_id: str) -> list[dict]:
        local = self.curation.locals_of(etype).get(local_id)
        return [self._dereference(local.anchor)] if local else []

    def _dereference(self, anchor) -> dict:
        return self._dereference_parts(anchor.record_id, anchor.table, anchor.row, anchor.columns)

    def _dereference_parts(self, record_id: str, table: str, row: int, columns: tuple) -> dict:
        out = {"columns": list(columns), "record_id": record_id, "row": row, "table": table, "cells": {}}
        record = self.records.published_record(record_id)
        if record is not None:
            template = self.records.get_template(record.template_id)
            out["record_version"] = self.records.published_version(record_id)
            for column in columns:
                out["cells"][column] = cell_raw(record, template, table, row, column)
        return out

    # --- quality -------------------------------------------------------------

    def quality_report(self, rules: list[MatchRule] | None = None) -> dict:
        published: dict[str, list[Record]] = {}
        for record in self.records.published_records():
            published.setdefault(record.template_id, []).append(record)
        completeness_out = []
        values_out = []
        for template_id in sorted(published):
            template = self.records.get_template(template_id)
            records = published[template_id]
            for entry in completeness(template, records):
                entry["template"] = template_id
                completeness_out.append(entry)
            try:
                spec = self.mapping_for(template)
            except MissingMapping:
                spec = None
            if spec is not None:
                values_out.extend(value_consistency(template, spec, records))
        try:
            ontology = self.ontology()
            schema_out = schema_consistency(self.graphs.snapshot(), ontology, self.config)
        except MissingMapping:
            schema_out = []
        return {
            "completeness": completeness_out,
            "conciseness": conciseness(self.curation, rules or []),
            "consistency": {"schema": schema_out, "values": values_out},
        }
