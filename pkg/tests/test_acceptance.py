"""Scenario gate: one test per core capability, printed as a checklist.

Each test exercises shipped behavior end to end at desk scale: the
curation walkthrough, URI shape, grouped counts with the Unknown bucket,
surgical graph refresh, cross-run determinism, oracle parity on
randomized inputs, round-trip identities, quality reporting, and a scale
smoke check. Each carries a checklist label; the run's terminal summary
prints one "[PASS] name" or "[FAIL] name" line per criterion, so a full
run doubles as an acceptance report.
"""

from __future__ import annotations

import json
import os
import random
import subprocess
import sys
import time
from types import SimpleNamespace

import pytest

from oracles import ref_closure, ref_partition, ref_query
from support import (
    CREW_MAPPING,
    CREW_TEMPLATE,
    MATCH_RULES,
    ONTOLOGY_DOC,
    PREFIX,
    REGISTER_MAPPING,
    REGISTER_TEMPLATE,
    crew_record,
    plain_from_obj,
    plain_quads,
    register_record,
)
from quire.canonical import canonical_json_bytes
from quire.config import EngineConfig
from quire.curation import CurationStore, MatchRule, NormalizeFlags, match_rules_from_doc
from quire.engine import Workspace
from quire.graphstore import Literal, Quad, parse_nquads, run_query
from quire.mapping import load_mapping
from quire.naming import RDF_TYPE, local_instance_iri, record_iri
from quire.records import Anchor, Mention, record_from_doc, record_to_doc
from quire.transform import TermIriResolver, master_iris, materialised_quads

ONT = PREFIX + "/ontology/"
ART = PREFIX + "/ns/"
GRAPHS = PREFIX + "/graph/"


def criterion(name):
    """Label a test as one line item on the acceptance checklist."""
    return pytest.mark.criterion(name)


def fresh(path) -> Workspace:
    ws = Workspace.init(path, EngineConfig(uri_prefix=PREFIX))
    ws.import_ontology(json.dumps(ONTOLOGY_DOC))
    ws.import_template(CREW_TEMPLATE)
    ws.import_mapping(CREW_MAPPING)
    return ws


def publish_all(ws, *docs):
    for doc in docs:
        ws.import_record(doc, author="acceptance")
    ws.publish_many([doc["id"] for doc in docs])


# --- curation walkthrough -----------------------------------------------------


@criterion("manual-merge-end-to-end")
def test_manual_merge_end_to_end(tmp_path):
    t0 = time.monotonic()
    ws = fresh(tmp_path / "ws")
    publish_all(
        ws,
        crew_record("r0001", ship="Elisa", port="Genova", crew=(("Agostino", "B??ndi", "master", "42", "1855-05-02"),)),
        crew_record("r0002", ship="Luisa", port="Livorno", crew=(("A", "Brondi", "mate", "", ""),)),
    )

    rules = {"rules": [{"entity_type": "person", "key_roles": ["first_name", "last_name"]}]}
    assert ws.auto_match_doc(rules) == []  # the damaged name keys differ: no rule merge
    masters = ws.curation.masters_of("person")
    assert len(masters) == 2

    event = ws.curation.manual_match("person", sorted(masters))
    ws.transform()

    iris = master_iris(ws.curation, ws.config)
    master_iri = iris[("person", event.survivor)]
    links = ws.graphs.snapshot()[GRAPHS + "curation-links"]
    same = [q for q in links if q.p == ART + "same-identity" and q.s.startswith(PREFIX + "/person/")]
    assert {q.s for q in same} == {master_iri}  # exactly one person identity published
    locals_ = ws.curation.masters_of("person")[event.survivor].members
    assert {q.o for q in same} == {local_instance_iri(PREFIX, "person", lid) for lid in locals_}
    assert len(same) == 2

    trail = ws.provenance_of(master_iri)
    assert trail["kind"] == "identity"
    names = {(a["cells"]["First name"], a["cells"]["Last name"]) for a in trail["anchors"]}
    assert names == {("Agostino", "B??ndi"), ("A", "Brondi")}  # raw bytes, not cleaned forms
    assert time.monotonic() - t0 < 5.0


# --- URI shape ------------------------------------------------------------------


@criterion("location-uri-shape")
def test_location_uri_shape(tmp_path):
    ws = fresh(tmp_path / "ws")
    publish_all(
        ws,
        crew_record("r0001", port="Sardinia"),
        crew_record("r0002", ship="Luisa", port=" SARDINIA "),
    )
    ws.auto_match_doc(MATCH_RULES)
    ws.transform()
    expected = "https://rs.sealitproject.eu/kb/location/sardinia"
    assert expected in master_iris(ws.curation, ws.config).values()
    assert f"<{expected}>".encode("utf-8") in ws.export_nquads()


# --- grouped counts with the Unknown bucket ----------------------------------------


@criterion("grouped-count-unknown-bucket")
def test_grouped_count_unknown_bucket(tmp_path):
    ws = fresh(tmp_path / "ws")
    ships = [
        ("Aurora", "1832-05-01", "Genova"),
        ("Bella", "1835-09-12", "Livorno"),
        ("Cometa", "1838-02-20", ""),  # port never transcribed
    ]
    docs = []
    for i, (name, year, port) in enumerate(ships):
        docs.append(
            crew_record(
                f"r{i:04d}",
                ship=name,
                year=year,
                place="",
                port=port,
                crew=((f"Marco{i}", f"Fal{i}", "master", "30", "1855-01-01"),),
            )
        )
    publish_all(ws, *docs)
    ws.transform()

    ports = {
        local_instance_iri(PREFIX, "location", lid): inst.attributes["name"]
        for lid, inst in ws.curation.locals_of("location").items()
    }
    assert sorted(ports.values()) == ["Genova", "Livorno"]

    query = {
        "patterns": [
            ["?s", f"<{RDF_TYPE}>", f"<{ONT}Ship>"],
            ["?s", f"<{ONT}construction>", "?e"],
            ["?e", f"<{ONT}event-date>", "?d"],
        ],
        "optional": [["?s", f"<{ONT}registry-port>", "?p"]],
        "filters": [{"var": "?d", "op": "range", "min": "1830-01-01", "max": "1840-12-31"}],
        "select": ["?s"],
        "group_by": "?p",
        "aggregate": "count",
    }
    t0 = time.monotonic()
    result = ws.query(query)
    assert time.monotonic() - t0 < 1.0

    assert result["total"] == 3
    assert result["rows"][-1]["group"] == "Unknown"  # reserved bucket closes the list
    got = {}
    for row in result["rows"]:
        group = row["group"]
        got[ports[group["iri"]] if isinstance(group, dict) else group] = row["count"]
    assert got == {"Genova": 1, "Livorno": 1, "Unknown": 1}


# --- surgical graph refresh ---------------------------------------------------------


@criterion("partial-refresh-line-diff")
def test_partial_refresh_line_diff(tmp_path):
    ws = fresh(tmp_path / "ws")
    publish_all(
        ws,
        crew_record("r0001", ship="Aurora", port="Genova"),
        crew_record("r0002", ship="Bella", port="Livorno"),
        crew_record("r0003", ship="Cometa", port="Napoli"),
    )
    ws.transform()
    before = parse_nquads(ws.export_nquads().decode("utf-8"))

    revised = crew_record(
        "r0002",
        ship="Bella",
        port="Livorno",
        tonnage="200",
        crew=(
            ("Agostino", "Brondi", "master", "42", "1855-05-02"),
            ("Bruno", "Secondo", "mate", "28", "1855-05-03"),
        ),
    )
    ws.import_record(revised, author="reviser")
    ws.publish("r0002")
    ws.transform(["r0002"])
    after = parse_nquads(ws.export_nquads().decode("utf-8"))

    record_graph = GRAPHS + "record/r0002"
    prov_graph = GRAPHS + "provenance"
    target = record_iri(PREFIX, "r0002")

    def split(quads):
        nodes = {q.s for q in quads if q.p == ART + "from-record" and q.o == target}

        def owned(q):
            return q.s in nodes or q.s == target or (isinstance(q.o, str) and q.o in nodes)

        record = {q for q in quads if q.g == record_graph}
        prov_owned = {q for q in quads if q.g == prov_graph and owned(q)}
        rest = {q for q in quads if q.g != record_graph and not (q.g == prov_graph and owned(q))}
        return record, prov_owned, rest

    rec_before, prov_before, rest_before = split(set(before))
    rec_after, prov_after, rest_after = split(set(after))
    assert rest_before == rest_after  # nothing outside the edited record moved
    assert rec_before != rec_after  # the tonnage and crew edits landed
    assert prov_before != prov_after  # the new row grew the provenance trail


# --- determinism across runs ----------------------------------------------------------


@criterion("deterministic-exports")
def test_deterministic_exports(tmp_path):
    files = tmp_path / "files"
    files.mkdir()
    docs = {
        "template.json": CREW_TEMPLATE,
        "ontology.json": ONTOLOGY_DOC,
        "mapping.json": CREW_MAPPING,
        "rules.json": MATCH_RULES,
        "r1.json": crew_record("r0001", port="Sardinia"),
        "r2.json": crew_record("r0002", ship="Luisa", port=" SARDINIA "),
        "r3.json": crew_record("r0003", ship="Cometa", port="Genova", owner=""),
    }
    for name, doc in docs.items():
        (files / name).write_bytes(canonical_json_bytes(doc))

    def pipeline(data_dir, hash_seed):
        env = {**os.environ, "PYTHONHASHSEED": hash_seed}

        def run(*argv):
            proc = subprocess.run(
                [sys.executable, "-m", "quire.cli", "--data", str(data_dir), *argv],
                capture_output=True,
                env=env,
            )
            assert proc.returncode == 0, (argv, proc.stderr.decode())
            return proc.stdout

        run("init", "--prefix", PREFIX)
        run("import-template", str(files / "template.json"))
        run("import-ontology", str(files / "ontology.json"))
        run("import-mapping", str(files / "mapping.json"))
        for name in ("r1", "r2", "r3"):
            run("import-record", str(files / f"{name}.json"), "--author", "archivist")
        for rid in ("r0001", "r0002", "r0003"):
            run("publish", rid)
        run("auto-match", "--rules", str(files / "rules.json"))
        run("transform")
        return run("export")

    first = pipeline(tmp_path / "a", "0")
    second = pipeline(tmp_path / "b", "424242")
    assert first == second
    assert first.endswith(b"\n") and first.count(b"\n") > 50


# --- matching oracle ---------------------------------------------------------------


def _person_store(path, people):
    """People as (first, last) pairs; None means the role was never filled."""
    store = CurationStore(path)
    mentions = []
    for row, (first, last) in enumerate(people):
        attrs = []
        if first is not None:
            attrs.append(("first_name", first))
        if last is not None:
            attrs.append(("last_name", last))
        mentions.append(
            Mention(
                kind="entity",
                entity_type="person",
                attributes=tuple(attrs),
                anchor=Anchor("r0001", "People", row, ("First", "Last")),
            )
        )
    store.ingest("r0001", mentions)
    attributes = {m.local_id: dict(m.attributes) for m in mentions}
    return store, attributes


def _partition(store):
    return {frozenset(m.members) for m in store.masters_of("person").values()}


@criterion("matching-oracle")
def test_matching_oracle(tmp_path):
    rng = random.Random(20260816)
    firsts = ["anna", "Anna", " ANNA ", "bruno", "carla", "dario", "", None]
    lasts = ["rossi", "Rossi", "  rossi", "bianchi", "costa", "", None]
    role_sets = [("first_name", "last_name"), ("last_name",), ("first_name",)]

    # rule composition without exceptions: exact partition parity
    for trial in range(60):
        n = rng.randint(200, 500) if trial % 12 == 0 else rng.randint(2, 80)
        people = [(rng.choice(firsts), rng.choice(lasts)) for _ in range(n)]
        people[0] = ("anna", "rossi")  # every role resolvable somewhere
        store, attributes = _person_store(tmp_path / f"a{trial}", people)
        roles = rng.sample(role_sets, rng.randint(1, len(role_sets)))
        rules = [MatchRule("person", r, NormalizeFlags()) for r in roles]
        store.auto_match(rules)
        assert _partition(store) == ref_partition(attributes, [r.key_roles for r in rules]), trial

    # injected unmatch exceptions: the pulled occurrence must stay a singleton
    for trial in range(60):
        n = rng.randint(4, 80)
        people = [(rng.choice(firsts), rng.choice(lasts)) for _ in range(n)]
        people[0] = ("anna", "rossi")
        people[1] = ("Anna", "Rossi")  # guarantee at least one mergeable pair
        store, attributes = _person_store(tmp_path / f"b{trial}", people)
        rule = MatchRule("person", ("first_name", "last_name"), NormalizeFlags())
        store.auto_match([rule])
        pulled = []
        for _ in range(rng.randint(1, 4)):
            crowded = [m for m in store.masters_of("person").values() if len(m.members) >= 2]
            if not crowded:
                break
            victim = rng.choice(sorted(rng.choice(sorted(crowded, key=lambda m: m.id)).members))
            store.unmatch("person", victim)
            pulled.append(victim)
        store.auto_match([rule])

        expected = set()
        for group in ref_partition(attributes, [rule.key_roles]):
            rest = group - set(pulled)
            if rest:
                expected.add(frozenset(rest))
        expected |= {frozenset({lid}) for lid in pulled}
        assert _partition(store) == expected, trial
        for lid in pulled:
            master = store.masters_of("person")[store.master_of_local("person", lid)]
            assert master.members == {lid}


# --- hierarchy closure oracle ----------------------------------------------------------


class _HierarchyStub:
    def __init__(self, edges):
        self.terms = {
            raw: SimpleNamespace(broader=sorted(parents), preferred=None, appearances=())
            for raw, parents in edges.items()
        }

    def vocabularies(self):
        return ["v"]

    def terms_of(self, name):
        return self.terms


@criterion("hierarchy-closure-oracle")
def test_hierarchy_closure_oracle():
    rng = random.Random(8451)
    config = EngineConfig(uri_prefix=PREFIX)
    for trial in range(120):
        count = rng.randint(1, 50)
        names = [f"t{i:02d}" for i in range(count)]
        # edges point strictly to lower indices, so the graph stays acyclic
        edges = {
            name: {names[j] for j in range(i) if rng.random() < 0.08}
            for i, name in enumerate(names)
        }
        resolver = TermIriResolver(config, {"v": names})
        raw_of = {resolver.term_iri("v", raw): raw for raw in names}
        got = {raw: set() for raw in names}
        for q in materialised_quads(_HierarchyStub(edges), resolver, config):
            got[raw_of[q.s]].add(raw_of[q.o])
        assert got == ref_closure(edges), trial


# --- query oracle -----------------------------------------------------------------------


@criterion("query-oracle")
def test_query_oracle():
    rng = random.Random(60312)
    iris = [f"https://ex.org/n{i}" for i in range(7)]
    preds = [f"https://ex.org/p{i}" for i in range(4)]
    graphs = [f"https://ex.org/g{i}" for i in range(3)]
    lits = (
        [Literal(str(v), "integer") for v in (1, 5, 9, 120)]
        + [Literal(d, "date") for d in ("1850-01-01", "1855-06-15", "1861-12-30")]
        + [Literal(t, "text") for t in ("alpha", "beta", "al")]
    )
    variables = ["?a", "?b", "?c", "?d"]

    def doc_term(t):
        if isinstance(t, Literal):
            return {t.kind: t.lexical}
        return t if t.startswith("?") else f"<{t}>"

    def plain(t):
        if isinstance(t, Literal):
            return ("l", t.kind, t.lexical)
        return t if t.startswith("?") else ("i", t)

    def random_pattern():
        s = rng.choice(variables) if rng.random() < 0.6 else rng.choice(iris)
        p = rng.choice(variables) if rng.random() < 0.25 else rng.choice(preds)
        o = rng.choice(variables) if rng.random() < 0.55 else rng.choice(iris + lits)
        terms = [s, p, o]
        if rng.random() < 0.3:
            terms.append(rng.choice(variables) if rng.random() < 0.5 else rng.choice(graphs))
        return terms

    checked = 0
    while checked < 80:
        quads = {
            (rng.choice(iris), rng.choice(preds), rng.choice(iris + lits), rng.choice(graphs))
            for _ in range(rng.randint(30, 400))
        }
        snapshot = {g: frozenset(Quad(*q) for q in quads if q[3] == g) for g in graphs}

        patterns = [random_pattern() for _ in range(rng.randint(1, 3))]
        optional = [random_pattern() for _ in range(rng.randint(0, 2))]
        required_vars = sorted({t for p in patterns for t in p if isinstance(t, str) and t.startswith("?")})
        known = sorted(
            {t for p in patterns + optional for t in p if isinstance(t, str) and t.startswith("?")}
        )
        if not required_vars:
            continue
        select = rng.sample(required_vars, rng.randint(1, len(required_vars)))

        filters = []
        for var in rng.sample(known, min(len(known), rng.randint(0, 2))):
            kind = rng.choice(("eq", "prefix", "range"))
            if kind == "eq":
                value = rng.choice(iris + lits)
                filters.append({"var": var, "op": "eq", "value": doc_term(value) if isinstance(value, Literal) else {"iri": value}})
            elif kind == "prefix":
                filters.append({"var": var, "op": "prefix", "value": rng.choice(["a", "al", "https://ex.org/n", "185"])})
            else:
                if rng.random() < 0.5:
                    filters.append({"var": var, "op": "range", "min": rng.choice([1, 5, 100]), "max": rng.choice([9, 200])})
                else:
                    filters.append({"var": var, "op": "range", "min": "1850-01-01", "max": rng.choice(["1855-06-15", "1860-01-01"])})

        group_by = rng.choice(known) if rng.random() < 0.35 else None
        doc = {
            "patterns": [[doc_term(t) for t in p] for p in patterns],
            "select": select,
        }
        if optional:
            doc["optional"] = [[doc_term(t) for t in p] for p in optional]
        if filters:
            doc["filters"] = [dict(f) for f in filters]
        if group_by is not None:
            doc["group_by"] = group_by
            doc["aggregate"] = "count"

        def to_ref(p):
            slots = tuple(plain(t) for t in p)
            return slots if len(slots) == 4 else slots + (None,)

        ref_filters = []
        for f in filters:
            plain_f = dict(f)
            if f["op"] == "eq":
                plain_f["value"] = plain_from_obj(f["value"])
            ref_filters.append(plain_f)

        expected = ref_query(
            plain_quads(Quad(*q) for q in quads),
            [to_ref(p) for p in patterns],
            select,
            optional=[[to_ref(p)] for p in optional],
            filters=ref_filters,
            group_by=group_by,
        )
        result = run_query(snapshot, doc)
        if group_by is None:
            got = {tuple(plain_from_obj(v) for v in row) for row in result["rows"]}
            assert got == expected
            assert result["count"] == len(expected)
        else:
            got = {}
            for row in result["rows"]:
                group = row["group"]
                got[None if group == "Unknown" else plain_from_obj(group)] = row["count"]
            assert got == expected
            assert result["total"] == sum(expected.values())
            if None in expected:
                assert result["rows"][-1]["group"] == "Unknown"
        checked += 1


# --- round-trip identities --------------------------------------------------------------


@criterion("round-trip-identities")
def test_round_trip_identities(tmp_path):
    record_docs = [
        crew_record("r0001"),
        crew_record("r0002", ship="Luisa", owner="", crew=(("A", "Brondi", "mate", "", ""),)),
        register_record("r0003"),
    ]
    for doc in record_docs:
        normalized = record_to_doc(record_from_doc(doc))
        again = record_to_doc(record_from_doc(normalized))
        assert canonical_json_bytes(again) == canonical_json_bytes(normalized)
        for table, rows in doc["tables"].items():
            for i, row in enumerate(rows):
                for column, cell in row["cells"].items():
                    assert normalized["tables"][table][i]["cells"][column]["raw"] == cell["raw"]

    ws = fresh(tmp_path / "ws")
    ws.import_template(REGISTER_TEMPLATE)
    for mapping_doc in (CREW_MAPPING, REGISTER_MAPPING):
        report = ws.import_mapping(mapping_doc)
        assert report.ok
        stored = ws.mapping_doc(mapping_doc["template"])
        assert canonical_json_bytes(stored) == canonical_json_bytes(mapping_doc)
        spec, check = load_mapping(stored, ws.ontology(), ws.records.get_template(mapping_doc["template"]))
        assert check.ok and spec is not None

    publish_all(ws, crew_record("r0001", port="Sardinia"), register_record("r0009", port=" SARDINIA "))
    ws.auto_match_doc(MATCH_RULES)
    ws.transform()
    blob = ws.export_nquads()
    mirror = Workspace.init(tmp_path / "mirror", EngineConfig(uri_prefix=PREFIX))
    mirror.import_nquads(blob.decode("utf-8"))
    assert mirror.export_nquads() == blob
    mirror.import_nquads(blob.decode("utf-8"))  # idempotent
    assert mirror.export_nquads() == blob


# --- quality reports ----------------------------------------------------------------------


@criterion("quality-fixpoint-and-violation")
def test_quality_fixpoint_and_violation(tmp_path):
    ws = fresh(tmp_path / "ws")
    publish_all(
        ws,
        crew_record("r0001", port="Sardinia"),
        crew_record("r0002", ship="Luisa", port=" SARDINIA "),
    )
    ws.auto_match_doc(MATCH_RULES)
    ws.transform()

    rules = match_rules_from_doc(MATCH_RULES)
    report = ws.quality_report(rules)
    assert report["conciseness"] == []  # matching left no rule-visible duplicates
    assert report["consistency"]["schema"] == []

    seeded = (
        f"<{PREFIX}/x/p1> <{RDF_TYPE}> <{ONT}Person> <{GRAPHS}seeded> .\n"
        f'<{PREFIX}/x/p1> <{ONT}tonnage> "250.0"^^<http://www.w3.org/2001/XMLSchema#decimal> <{GRAPHS}seeded> .\n'
    )
    ws.import_nquads(seeded)
    findings = ws.quality_report(rules)["consistency"]["schema"]
    offenders = [
        f
        for f in findings
        if f["problem"] == "domain" and f"<{ONT}tonnage>" in f["quad"] and f["expected"] == "Ship"
    ]
    assert len(offenders) == 1
    assert offenders[0]["found"] == ["Person"]


# --- scale smoke -------------------------------------------------------------------------


def _synthetic_record(i: int) -> dict:
    ranks = ["master", "mate", "boatswain", "cook", "seaman"]
    types = ["brig", "schooner", "barque"]
    crew = []
    for j in range(5):
        crew.append(
            {
                "cells": {
                    "First name": {"raw": f"Name{(i * 7 + j) % 211}"},
                    "Last name": {"raw": f"Family{(i * 13 + j) % 389}"},
                    "Rank": {"raw": ranks[(i + j) % len(ranks)]},
                    "Age": {"raw": str(18 + (i + j) % 40)},
                    "Embarkation date": {"raw": f"18{55 + i % 10}-0{1 + j % 9}-15"},
                }
            }
        )
    return {
        "id": f"s{i:05d}",
        "template_id": "crew-list",
        "template_version": 1,
        "metadata": {"transcriber": "generator"},
        "tables": {
            "Ship": [
                {
                    "cells": {
                        "Ship name": {"raw": f"Vessel {i}"},
                        "Ship type": {"raw": types[i % 3]},
                        "Tonnage": {"raw": str(80 + i % 300)},
                        "Construction year": {"raw": f"18{30 + i % 20}-06-01"},
                        "Construction place": {"raw": f"Yard {i % 20}"},
                        "Registry port": {"raw": f"Port {i % 30}"},
                        "Owner": {"raw": f"House {i % 50}"},
                    }
                }
            ],
            "Crew": crew,
        },
    }


@criterion("scale-smoke")
def test_scale_smoke(tmp_path):
    ws = fresh(tmp_path / "ws")
    count = 1000
    for i in range(count):
        ws.import_record(_synthetic_record(i), author="generator")
    ws.publish_many([f"s{i:05d}" for i in range(count)])

    t0 = time.monotonic()
    report = ws.transform()
    transform_seconds = time.monotonic() - t0
    assert transform_seconds < 60.0
    assert len(report["records"]) == count

    quads = ws.export_nquads().count(b"\n")
    assert 90_000 <= quads <= 120_000  # the promised order of magnitude

    query = {
        "patterns": [["?s", f"<{ONT}ship-type>", "?t"]],
        "select": ["?s"],
        "group_by": "?t",
        "aggregate": "count",
    }
    t0 = time.monotonic()
    result = ws.query(query)
    query_seconds = time.monotonic() - t0
    assert query_seconds < 1.0
    assert result["total"] == count
    assert sum(row["count"] for row in result["rows"]) == count
