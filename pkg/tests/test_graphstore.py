"""Quad model, canonical N-Quads, the store, and the query engine."""

from __future__ import annotations

import string

import pytest
from hypothesis import given, strategies as st

import support
from oracles import ref_query
from quire.errors import DocumentParseError, GraphMismatch, MalformedQuery, StoreCorrupt
from quire.graphstore import (
    GraphStore,
    Literal,
    Quad,
    parse_nquads,
    quad_line,
    run_query,
    serialize_quads,
    valid_iri,
)

G = "https://ex.org/g"
S = "https://ex.org/s"
P = "https://ex.org/p"


def lit(lexical, kind="text"):
    return Literal(lexical, kind)


# --- serialization ------------------------------------------------------------

GOLDEN_QUADS = [
    Quad(S, P, "https://ex.org/o", G),
    Quad(S, P, lit('he said "hi"\\'), G),
    Quad(S, P, lit("a\nb\tc\rd"), G),
    Quad(S, P, lit("café"), G),
    Quad(S, P, lit("42", "integer"), G),
    Quad(S, P, lit("X", "https://ex.org/dt"), G),
]

GOLDEN_LINES = [
    r'<https://ex.org/s> <https://ex.org/p> "42"^^<http://www.w3.org/2001/XMLSchema#integer> <https://ex.org/g> .',
    r'<https://ex.org/s> <https://ex.org/p> "X"^^<https://ex.org/dt> <https://ex.org/g> .',
    r'<https://ex.org/s> <https://ex.org/p> "a\nb\tc\rd" <https://ex.org/g> .',
    '<https://ex.org/s> <https://ex.org/p> "café" <https://ex.org/g> .',
    r'<https://ex.org/s> <https://ex.org/p> "he said \"hi\"\\" <https://ex.org/g> .',
    r'<https://ex.org/s> <https://ex.org/p> <https://ex.org/o> <https://ex.org/g> .',
]


def test_serialization_matches_golden_bytes():
    expected = ("\n".join(GOLDEN_LINES) + "\n").encode("utf-8")
    assert serialize_quads(GOLDEN_QUADS) == expected


def test_serialization_dedupes_and_sorts():
    doubled = GOLDEN_QUADS + list(reversed(GOLDEN_QUADS))
    assert serialize_quads(doubled) == serialize_quads(GOLDEN_QUADS)


def test_empty_serialization_is_empty_bytes():
    assert serialize_quads([]) == b""


def test_parse_round_trips_golden():
    text = serialize_quads(GOLDEN_QUADS).decode("utf-8")
    assert set(parse_nquads(text)) == set(GOLDEN_QUADS)


def test_parse_skips_blanks_and_comments():
    text = '# comment\n\n<https://a> <https://b> "x" <https://g> .\n'
    assert len(parse_nquads(text)) == 1


@pytest.mark.parametrize(
    "line",
    [
        '<https://a> <https://b> "x" .',  # graph IRI required
        '<https://a> <https://b> "x" <https://g>',  # no trailing dot
        '<https://a> <https://b> "x"@en <https://g> .',  # language tags unsupported
        '_:b0 <https://b> "x" <https://g> .',  # blank nodes unsupported
        '<https://a> <https://b> "x\\q" <https://g> .',  # unknown escape
        '<https://a> "lit" "x" <https://g> .',  # literal predicate
    ],
)
def test_parse_rejects_bad_lines(line):
    with pytest.raises(DocumentParseError):
        parse_nquads(line + "\n")


def test_parse_reports_line_numbers():
    text = '<https://a> <https://b> "x" <https://g> .\nbroken\n'
    with pytest.raises(DocumentParseError) as err:
        parse_nquads(text)
    assert err.value.line == 2


def test_unicode_escape_forms_accepted():
    line = '<https://a> <https://b> "caf\\u00e9 \\U0001F6A2" <https://g> .'
    (quad,) = parse_nquads(line + "\n")
    assert quad.o.lexical == "café 🚢"


def test_valid_iri():
    assert valid_iri("https://ex.org/a%20b")
    assert not valid_iri("https://ex.org/a b")
    assert not valid_iri("no-scheme")
    assert not valid_iri('https://ex.org/"x"')


iri_tail = st.text(alphabet=string.ascii_lowercase + string.digits, min_size=1, max_size=6)
iris = st.builds(lambda t: "https://ex.org/" + t, iri_tail)
lex = st.text(min_size=0, max_size=12)
literals = st.builds(Literal, lex, st.sampled_from(["text", "integer", "decimal", "date", "https://ex.org/dt"]))
terms = st.one_of(iris, literals)
quads = st.builds(Quad, iris, iris, terms, iris)


@given(st.lists(quads, max_size=40))
def test_serialize_parse_round_trip(qs):
    text = serialize_quads(qs).decode("utf-8")
    assert set(parse_nquads(text)) == set(qs)
    # canonical output is a fixpoint
    assert serialize_quads(parse_nquads(text)) == serialize_quads(qs)


# --- store ---------------------------------------------------------------------


@pytest.fixture
def store(tmp_path) -> GraphStore:
    return GraphStore(tmp_path / "gs")


def q(s, o, p=P, g=G):
    return Quad(s, p, o, g)


def test_replace_and_read_back(store):
    commit = store.replace_graphs({G: [q(S, lit("a")), q(S, lit("b"))]})
    assert commit == 1
    assert store.graph_names() == [G]
    assert store.quad_counts() == {G: 2}
    assert len(list(store.quads())) == 2


def test_replace_is_wholesale(store):
    store.replace_graphs({G: [q(S, lit("a"))]})
    store.replace_graphs({G: [q(S, lit("b"))]})
    (quad,) = store.quads()
    assert quad.o == lit("b")


def test_replace_with_empty_list_deletes_graph(store):
    store.replace_graphs({G: [q(S, lit("a"))]})
    store.replace_graphs({G: []})
    assert store.graph_names() == []


def test_graph_mismatch_rejected_atomically(store):
    store.replace_graphs({G: [q(S, lit("a"))]})
    other = "https://ex.org/other"
    with pytest.raises(GraphMismatch):
        store.replace_graphs({other: [q(S, lit("x"), g=G)]})
    assert store.graph_names() == [G]
    assert store.quad_counts() == {G: 1}


def test_commit_ids_increase(store):
    assert store.replace_graphs({G: [q(S, lit("a"))]}) == 1
    assert store.replace_graphs({G: [q(S, lit("b"))]}) == 2


def test_reopen_sees_committed_state(tmp_path):
    store = GraphStore(tmp_path / "gs")
    store.replace_graphs({G: [q(S, lit("a"))], "https://ex.org/h": [q(S, "https://ex.org/o", g="https://ex.org/h")]})
    again = GraphStore(tmp_path / "gs")
    assert again.graph_names() == store.graph_names()
    assert set(again.quads()) == set(store.quads())
    assert again.replace_graphs({G: []}) == 2  # commit counter continues


def test_snapshot_is_stable(store):
    store.replace_graphs({G: [q(S, lit("a"))]})
    snap = store.snapshot()
    store.replace_graphs({G: [q(S, lit("b"))]})
    assert [qq.o for qq in snap[G]] == [lit("a")]


def test_export_scope(store):
    h = "https://ex.org/h"
    store.replace_graphs({G: [q(S, lit("a"))], h: [q(S, lit("b"), g=h)]})
    full = store.export_nquads()
    only_h = store.export_nquads([h])
    assert full.count(b"\n") == 2
    assert only_h.count(b"\n") == 1 and b"ex.org/h" in only_h


def test_corrupt_graph_file_reported(tmp_path):
    store = GraphStore(tmp_path / "gs")
    store.replace_graphs({G: [q(S, lit("a"))]})
    path = next((tmp_path / "gs" / "graphs").iterdir())
    path.write_text("garbage\n", encoding="utf-8")
    with pytest.raises(StoreCorrupt):
        GraphStore(tmp_path / "gs")


# --- queries --------------------------------------------------------------------


TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
SHIP = "https://ex.org/Ship"


def sample_store(tmp_path) -> GraphStore:
    store = GraphStore(tmp_path / "qs")
    g1, g2 = "https://ex.org/g1", "https://ex.org/g2"
    name = "https://ex.org/name"
    built = "https://ex.org/built"
    tons = "https://ex.org/tons"
    store.replace_graphs(
        {
            g1: [
                Quad("https://ex.org/s1", TYPE, SHIP, g1),
                Quad("https://ex.org/s1", name, lit("Elisa"), g1),
                Quad("https://ex.org/s1", built, lit("1855-04-01", "date"), g1),
                Quad("https://ex.org/s1", tons, lit("120", "integer"), g1),
            ],
            g2: [
                Quad("https://ex.org/s2", TYPE, SHIP, g2),
                Quad("https://ex.org/s2", name, lit("Maria"), g2),
                Quad("https://ex.org/s2", tons, lit("90", "integer"), g2),
                Quad("https://ex.org/s3", TYPE, SHIP, g2),
            ],
        }
    )
    return store


def test_join_and_select(tmp_path):
    store = sample_store(tmp_path)
    result = run_query(
        store.snapshot(),
        {
            "patterns": [["?s", f"<{TYPE}>", f"<{SHIP}>"], ["?s", "<https://ex.org/name>", "?n"]],
            "select": ["?s", "?n"],
        },
    )
    assert result["count"] == 2
    assert result["rows"][0] == [{"iri": "https://ex.org/s1"}, {"text": "Elisa"}]


def test_literal_terms_in_patterns(tmp_path):
    store = sample_store(tmp_path)
    result = run_query(
        store.snapshot(),
        {"patterns": [["?s", "<https://ex.org/name>", "Elisa"]], "select": ["?s"]},
    )
    assert result["rows"] == [[{"iri": "https://ex.org/s1"}]]
    result = run_query(
        store.snapshot(),
        {"patterns": [["?s", "<https://ex.org/tons>", {"integer": "120"}]], "select": ["?s"]},
    )
    assert result["count"] == 1


def test_graph_position_binds(tmp_path):
    store = sample_store(tmp_path)
    result = run_query(
        store.snapshot(),
        {"patterns": [[f"<https://ex.org/s2>", f"<{TYPE}>", f"<{SHIP}>", "?g"]], "select": ["?g"]},
    )
    assert result["rows"] == [[{"iri": "https://ex.org/g2"}]]


def test_distinct_rows(tmp_path):
    store = sample_store(tmp_path)
    # two type quads for s1/s2 plus one for s3; selecting the class collapses
    result = run_query(store.snapshot(), {"patterns": [["?s", f"<{TYPE}>", "?c"]], "select": ["?c"]})
    assert result["rows"] == [[{"iri": SHIP}]]


def test_optional_left_join(tmp_path):
    store = sample_store(tmp_path)
    result = run_query(
        store.snapshot(),
        {
            "patterns": [["?s", f"<{TYPE}>", f"<{SHIP}>"]],
            "optional": [["?s", "<https://ex.org/name>", "?n"]],
            "select": ["?s", "?n"],
        },
    )
    rows = result["rows"]
    assert len(rows) == 3
    assert [None] == [r[1] for r in rows if r[0] == {"iri": "https://ex.org/s3"}]


def test_filters(tmp_path):
    store = sample_store(tmp_path)
    base = {
        "patterns": [["?s", f"<{TYPE}>", f"<{SHIP}>"]],
        "optional": [["?s", "<https://ex.org/tons>", "?t"], ["?s", "<https://ex.org/built>", "?d"]],
        "select": ["?s"],
    }
    eq = run_query(store.snapshot(), {**base, "filters": [{"var": "?t", "op": "eq", "value": {"integer": "120"}}]})
    assert eq["rows"] == [[{"iri": "https://ex.org/s1"}]]

    rng = run_query(store.snapshot(), {**base, "filters": [{"var": "?t", "op": "range", "min": 100}]})
    assert rng["rows"] == [[{"iri": "https://ex.org/s1"}]]

    date_rng = run_query(
        store.snapshot(),
        {**base, "filters": [{"var": "?d", "op": "range", "min": "1850-01-01", "max": "1859-12-31"}]},
    )
    assert date_rng["rows"] == [[{"iri": "https://ex.org/s1"}]]

    pfx = run_query(store.snapshot(), {**base, "filters": [{"var": "?s", "op": "prefix", "value": "https://ex.org/s"}]})
    assert pfx["count"] == 3
    # filtering on an unbound optional variable drops the solution
    unbound = run_query(store.snapshot(), {**base, "filters": [{"var": "?d", "op": "prefix", "value": "1855"}]})
    assert unbound["rows"] == [[{"iri": "https://ex.org/s1"}]]


def test_group_count_with_unknown_bucket(tmp_path):
    store = sample_store(tmp_path)
    result = run_query(
        store.snapshot(),
        {
            "patterns": [["?s", f"<{TYPE}>", f"<{SHIP}>"]],
            "optional": [["?s", "<https://ex.org/name>", "?n"]],
            "select": ["?s"],
            "group_by": "?n",
            "aggregate": "count",
        },
    )
    assert result["total"] == 3
    assert result["rows"][-1] == {"count": 1, "group": "Unknown"}
    assert {r["group"]["text"]: r["count"] for r in result["rows"][:-1]} == {"Elisa": 1, "Maria": 1}


def test_group_counts_distinct_primaries(tmp_path):
    store = GraphStore(tmp_path / "qs2")
    g = "https://ex.org/g"
    name = "https://ex.org/name"
    # two name quads for the same subject and group value
    store.replace_graphs(
        {
            g: [
                Quad("https://ex.org/s1", name, lit("Elisa"), g),
                Quad("https://ex.org/s1", TYPE, SHIP, g),
                Quad("https://ex.org/s2", TYPE, SHIP, g),
                Quad("https://ex.org/s2", name, lit("Elisa"), g),
            ]
        }
    )
    result = run_query(
        store.snapshot(),
        {
            "patterns": [["?s", f"<{TYPE}>", f"<{SHIP}>"], ["?s", f"<{name}>", "?n"]],
            "select": ["?s"],
            "group_by": "?n",
            "aggregate": "count",
        },
    )
    assert result["rows"] == [{"count": 2, "group": {"text": "Elisa"}}]


def test_graphs_scope(tmp_path):
    store = sample_store(tmp_path)
    result = run_query(
        store.snapshot(),
        {"patterns": [["?s", f"<{TYPE}>", f"<{SHIP}>"]], "select": ["?s"], "graphs": ["https://ex.org/g1"]},
    )
    assert result["rows"] == [[{"iri": "https://ex.org/s1"}]]


@pytest.mark.parametrize(
    "doc",
    [
        {},
        {"patterns": [], "select": ["?s"]},
        {"patterns": [["?s", "<https://p>", "?o"]], "select": []},
        {"patterns": [["?s", "<https://p>", "?o"]], "select": ["?zzz"]},
        {"patterns": [["?s", "<https://p>", "?o"]], "select": ["s"]},
        {"patterns": [["?s", "<https://p>"]], "select": ["?s"]},
        {"patterns": [["lit", "<https://p>", "?o"]], "select": ["?o"]},
        {"patterns": [["?s", "bare", "?o"]], "select": ["?s"]},
        {"patterns": [["?s", "<https://p>", "?o"]], "select": ["?s"], "group_by": "?o"},
        {"patterns": [["?s", "<https://p>", "?o"]], "select": ["?s"], "group_by": "?o", "aggregate": "sum"},
        {"patterns": [["?s", "<https://p>", "?o"]], "select": ["?s"], "filters": [{"var": "?x", "op": "eq", "value": "v"}]},
        {"patterns": [["?s", "<https://p>", "?o"]], "select": ["?s"], "filters": [{"var": "?o", "op": "like", "value": "v"}]},
        {"patterns": [["?s", "<https://p>", "?o", "Elisa"]], "select": ["?s"]},
    ],
)
def test_malformed_queries_rejected(tmp_path, doc):
    store = sample_store(tmp_path)
    with pytest.raises(MalformedQuery):
        run_query(store.snapshot(), doc)


# --- randomized comparison against the naive evaluator ------------------------------


pred_pool = ["https://ex.org/p1", "https://ex.org/p2", "https://ex.org/p3"]
node_pool = [f"https://ex.org/n{i}" for i in range(6)]
value_pool = [lit("a"), lit("b"), lit("3", "integer"), lit("9", "integer")]
graph_pool = ["https://ex.org/ga", "https://ex.org/gb"]

rand_quads = st.lists(
    st.builds(
        Quad,
        st.sampled_from(node_pool),
        st.sampled_from(pred_pool),
        st.one_of(st.sampled_from(node_pool), st.sampled_from(value_pool)),
        st.sampled_from(graph_pool),
    ),
    min_size=1,
    max_size=60,
)

var_pool = ["?a", "?b", "?c"]


def pattern_strategy():
    term = st.one_of(st.sampled_from(var_pool), st.sampled_from(node_pool))
    obj = st.one_of(st.sampled_from(var_pool), st.sampled_from(node_pool), st.sampled_from(value_pool))
    pred = st.one_of(st.sampled_from(var_pool), st.sampled_from(pred_pool))
    return st.tuples(term, pred, obj)


@given(qs=rand_quads, patterns=st.lists(pattern_strategy(), min_size=1, max_size=3))
def test_query_matches_oracle(qs, patterns):
    snapshot = {g: frozenset(q for q in qs if q.g == g) for g in graph_pool}

    variables = sorted({t for p in patterns for t in p if isinstance(t, str) and t.startswith("?")})
    if not variables:
        return

    def to_doc_term(t):
        if isinstance(t, Literal):
            return {t.kind: t.lexical}
        if t.startswith("?"):
            return t
        return f"<{t}>"

    doc = {"patterns": [[to_doc_term(t) for t in p] for p in patterns], "select": variables}
    result = run_query(snapshot, doc)

    def to_plain(t):
        if isinstance(t, Literal):
            return ("l", t.kind, t.lexical)
        if t.startswith("?"):
            return t
        return ("i", t)

    expected = ref_query(
        support.plain_quads(set(qs)),
        [tuple(to_plain(t) for t in p) + (None,) for p in patterns],
        variables,
    )
    got = {tuple(support.plain_from_obj(v) for v in row) for row in result["rows"]}
    assert got == expected
    assert result["count"] == len(expected)
