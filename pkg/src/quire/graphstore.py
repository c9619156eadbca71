"""Named-graph quad store with canonical serialization and pattern queries.

Quads live in named graphs; the store replaces whole graphs at a time, which
is what keeps regeneration surgical: re-deriving one record's statements
swaps exactly one graph and leaves every other byte of the store untouched.

Serialization is canonical: one N-Quads line per quad, minimal escapes,
non-ASCII written as UTF-8, lines sorted bytewise, LF endings. Two stores
with equal content are byte-identical on disk, and exports diff cleanly.

Queries are JSON documents: required patterns, optional pattern groups
(left-joined), filters, a selection, and optionally a grouped count. Group
values that stay unbound are reported under the reserved "Unknown" bucket;
the underlying data never holds placeholder values for missing cells.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote, unquote

from .errors import DocumentParseError, GraphMismatch, MalformedQuery, StoreCorrupt
from .naming import XSD
from .values import parse_typed

UNKNOWN_LABEL = "Unknown"

LITERAL_KINDS = ("text", "integer", "decimal", "date")

_KIND_TO_DATATYPE = {
    "integer": XSD + "integer",
    "decimal": XSD + "decimal",
    "date": XSD + "date",
}
_DATATYPE_TO_KIND = {iri: kind for kind, iri in _KIND_TO_DATATYPE.items()}
_XSD_STRING = XSD + "string"

_BAD_IRI_CHARS = set(' <>"{}|^`\\')


@dataclass(frozen=True)
class Literal:
    lexical: str
    kind: str = "text"  # one of LITERAL_KINDS, or a foreign datatype IRI

    def datatype_iri(self) -> str | None:
        if self.kind == "text":
            return None
        return _KIND_TO_DATATYPE.get(self.kind, self.kind)


@dataclass(frozen=True)
class Quad:
    s: str
    p: str
    o: str | Literal
    g: str


_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:")


def valid_iri(iri: str) -> bool:
    # absolute IRIs only; relative references have no place in a quad file
    if not iri or not _SCHEME.match(iri):
        return False
    return not any(ch in _BAD_IRI_CHARS or ord(ch) <= 0x20 for ch in iri)


def _escape(text: str) -> str:
    return (
        text.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )


def _unescape(text: str, lineno: int) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(text):
            raise DocumentParseError("dangling escape", line=lineno)
        esc = text[i + 1]
        simple = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t"}
        if esc in simple:
            out.append(simple[esc])
            i += 2
        elif esc == "u" or esc == "U":
            width = 4 if esc == "u" else 8
            hexpart = text[i + 2 : i + 2 + width]
            if len(hexpart) != width:
                raise DocumentParseError(f"truncated \\{esc} escape", line=lineno)
            try:
                out.append(chr(int(hexpart, 16)))
            except ValueError:
                raise DocumentParseError(f"bad \\{esc} escape {hexpart!r}", line=lineno) from None
            i += 2 + width
        else:
            raise DocumentParseError(f"unknown escape \\{esc}", line=lineno)
    return "".join(out)


def term_text(o: str | Literal) -> str:
    if isinstance(o, Literal):
        dt = o.datatype_iri()
        if dt is None:
            return f'"{_escape(o.lexical)}"'
        return f'"{_escape(o.lexical)}"^^<{dt}>'
    return f"<{o}>"


def quad_line(q: Quad) -> str:
    return f"<{q.s}> <{q.p}> {term_text(q.o)} <{q.g}> ."


def serialize_quads(quads) -> bytes:
    """Canonical N-Quads: sorted lines, LF, trailing newline (empty when no quads)."""
    lines = sorted(quad_line(q) for q in set(quads))
    if not lines:
        return b""
    return ("\n".join(lines) + "\n").encode("utf-8")


class _LineParser:
    def __init__(self, text: str, lineno: int):
        self.text = text
        self.pos = 0
        self.lineno = lineno

    def error(self, message: str) -> DocumentParseError:
        return DocumentParseError(message, line=self.lineno, column=self.pos + 1)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def iri(self) -> str:
        if self.peek() != "<":
            raise self.error("expected IRI")
        end = self.text.find(">", self.pos + 1)
        if end < 0:
            raise self.error("unterminated IRI")
        iri = self.text[self.pos + 1 : end]
        if not valid_iri(iri):
            raise self.error(f"invalid IRI {iri!r}")
        self.pos = end + 1
        return iri

    def term(self) -> str | Literal:
        ch = self.peek()
        if ch == "<":
            return self.iri()
        if ch == '"':
            end = self.pos + 1
            while end < len(self.text):
                if self.text[end] == '"':
                    backslashes = 0
                    j = end - 1
                    while j > self.pos and self.text[j] == "\\":
                        backslashes += 1
                        j -= 1
                    if backslashes % 2 == 0:
                        break
                end += 1
            else:
                raise self.error("unterminated literal")
            lexical = _unescape(self.text[self.pos + 1 : end], self.lineno)
            self.pos = end + 1
            if self.peek() == "@":
                raise self.error("language-tagged literals are not supported")
            if self.text.startswith("^^", self.pos):
                self.pos += 2
                dt = self.iri()
                if dt == _XSD_STRING:
                    return Literal(lexical, "text")
                return Literal(lexical, _DATATYPE_TO_KIND.get(dt, dt))
            return Literal(lexical, "text")
        if ch == "_":
            raise self.error("blank nodes are not supported")
        raise self.error(f"unexpected character {ch!r}")


def parse_nquads(text: str) -> list[Quad]:
    """Parse N-Quads; whitespace-permissive, strict four-term lines."""
    quads = []
    for lineno, raw_line in enumerate(text.split("\n"), start=1):
        line = raw_line.strip()
        if line == "" or line.startswith("#"):
            continue
        p = _LineParser(line, lineno)
        s = p.iri()
        p.skip_ws()
        pred = p.iri()
        p.skip_ws()
        obj = p.term()
        p.skip_ws()
        if p.peek() == ".":
            raise p.error("graph IRI required (quad store holds no default graph)")
        g = p.iri()
        p.skip_ws()
        if p.peek() != ".":
            raise p.error("expected '.'")
        p.pos += 1
        p.skip_ws()
        if p.pos != len(line):
            raise p.error("trailing content after '.'")
        quads.append(Quad(s, pred, obj, g))
    return quads


class GraphStore:
    """Quads on disk, one canonical file per named graph, plus a commit log."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.graphs_dir = self.root / "graphs"
        self.graphs_dir.mkdir(parents=True, exist_ok=True)
        self.commits_log = self.root / "commits.log"
        self._lock = threading.Lock()
        graphs: dict[str, frozenset[Quad]] = {}
        for name in sorted(os.listdir(self.graphs_dir)):
            if not name.endswith(".nq"):
                continue
            iri = unquote(name[:-3])
            path = self.graphs_dir / name
            try:
                quads = parse_nquads(path.read_text("utf-8"))
            except DocumentParseError as exc:
                raise StoreCorrupt(f"unreadable graph file {path}: {exc}", path=str(path)) from exc
            for q in quads:
                if q.g != iri:
                    raise StoreCorrupt(
                        f"graph file {path} holds a quad of graph {q.g!r}", path=str(path)
                    )
            graphs[iri] = frozenset(quads)
        self._graphs = graphs

    # --- reads ------------------------------------------------------------

    def snapshot(self) -> dict[str, frozenset[Quad]]:
        """Immutable view; replaced wholesale on commit, never mutated."""
        return self._graphs

    def graph_names(self) -> list[str]:
        return sorted(self._graphs)

    def quads(self, graphs=None):
        snap = self._graphs
        names = sorted(snap) if graphs is None else [g for g in sorted(set(graphs)) if g in snap]
        for name in names:
            yield from snap[name]

    def quad_counts(self) -> dict[str, int]:
        return {g: len(qs) for g, qs in self._graphs.items()}

    def export_nquads(self, graphs=None) -> bytes:
        return serialize_quads(self.quads(graphs))

    # --- writes ------------------------------------------------------------

    def replace_graphs(self, updates: dict[str, list[Quad]]) -> int:
        """Replace each named graph's content wholesale; returns the commit id.

        An empty quad list deletes the graph. Readers holding an older
        snapshot keep a consistent view of the previous commit.
        """
        prepared: dict[str, frozenset[Quad]] = {}
        for iri, quads in updates.items():
            if not valid_iri(iri):
                raise GraphMismatch(f"invalid graph IRI {iri!r}")
            quadset = frozenset(quads)
            for q in quadset:
                if q.g != iri:
                    raise GraphMismatch(f"quad of graph {q.g!r} offered to graph {iri!r}")
                for term in (q.s, q.p):
                    if not valid_iri(term):
                        raise DocumentParseError(f"invalid IRI {term!r} in graph {iri!r}")
                if isinstance(q.o, str) and not valid_iri(q.o):
                    raise DocumentParseError(f"invalid IRI {q.o!r} in graph {iri!r}")
            prepared[iri] = quadset
        with self._lock:
            for iri, quadset in prepared.items():
                path = self.graphs_dir / (quote(iri, safe="") + ".nq")
                if quadset:
                    tmp = path.with_name(path.name + ".tmp")
                    tmp.write_bytes(serialize_quads(quadset))
                    os.replace(tmp, path)
                elif path.exists():
                    os.unlink(path)
            graphs = dict(self._graphs)
            for iri, quadset in prepared.items():
                if quadset:
                    graphs[iri] = quadset
                else:
                    graphs.pop(iri, None)
            commit = self._next_commit()
            entry = {"commit": commit, "replaced": {iri: len(qs) for iri, qs in sorted(prepared.items())}}
            with open(self.commits_log, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
            self._graphs = graphs
            return commit

    def _next_commit(self) -> int:
        if not self.commits_log.exists():
            return 1
        last = None
        with open(self.commits_log, "rb") as fh:
            for line in fh:
                if line.strip():
                    last = line
        if last is None:
            return 1
        return json.loads(last)["commit"] + 1


# --- queries ------------------------------------------------------------


def _query_term(obj, where: str):
    """Parse one term of a query document."""
    if isinstance(obj, str):
        if obj.startswith("?"):
            if len(obj) < 2:
                raise MalformedQuery(f"{where}: bare '?' is not a variable")
            return ("var", obj)
        if obj.startswith("<") and obj.endswith(">"):
            iri = obj[1:-1]
            if not valid_iri(iri):
                raise MalformedQuery(f"{where}: invalid IRI {iri!r}")
            return ("term", iri)
        return ("term", Literal(obj, "text"))
    if isinstance(obj, dict) and len(obj) == 1:
        [(key, value)] = obj.items()
        if key == "iri":
            if not isinstance(value, str) or not valid_iri(value):
                raise MalformedQuery(f"{where}: invalid IRI {value!r}")
            return ("term", value)
        if key in LITERAL_KINDS:
            lexical = parse_typed(str(value), key)
            if lexical is None:
                raise MalformedQuery(f"{where}: {value!r} is no valid {key}")
            return ("term", Literal(lexical, key))
    raise MalformedQuery(f"{where}: unrecognized term {obj!r}")


@dataclass(frozen=True)
class _Pattern:
    s: tuple
    p: tuple
    o: tuple
    g: tuple | None

    def variables(self):
        for kind, value in (self.s, self.p, self.o) + ((self.g,) if self.g else ()):
            if kind == "var":
                yield value


def _parse_pattern(obj, where: str) -> _Pattern:
    if not isinstance(obj, list) or len(obj) not in (3, 4):
        raise MalformedQuery(f"{where}: a pattern is a list of three or four terms")
    terms = [_query_term(t, f"{where}[{i}]") for i, t in enumerate(obj)]
    for slot, name in ((0, "subject"), (1, "predicate")):
        kind, value = terms[slot]
        if kind == "term" and isinstance(value, Literal):
            raise MalformedQuery(f"{where}: {name} cannot be a literal")
    if len(terms) == 4:
        kind, value = terms[3]
        if kind == "term" and isinstance(value, Literal):
            raise MalformedQuery(f"{where}: graph cannot be a literal")
    return _Pattern(terms[0], terms[1], terms[2], terms[3] if len(terms) == 4 else None)


class _Index:
    def __init__(self, quads):
        self.all = list(quads)
        self.by_s: dict = {}
        self.by_p: dict = {}
        self.by_o: dict = {}
        self.by_sp: dict = {}
        self.by_po: dict = {}
        for q in self.all:
            self.by_s.setdefault(q.s, []).append(q)
            self.by_p.setdefault(q.p, []).append(q)
            self.by_o.setdefault(q.o, []).append(q)
            self.by_sp.setdefault((q.s, q.p), []).append(q)
            self.by_po.setdefault((q.p, q.o), []).append(q)

    def candidates(self, s, p, o):
        if s is not None and p is not None:
            return self.by_sp.get((s, p), ())
        if p is not None and o is not None:
            return self.by_po.get((p, o), ())
        if s is not None:
            return self.by_s.get(s, ())
        if o is not None:
            return self.by_o.get(o, ())
        if p is not None:
            return self.by_p.get(p, ())
        return self.all


def _resolve(term: tuple, binding: dict):
    kind, value = term
    if kind == "term":
        return value
    return binding.get(value)


def _match_patterns(index: _Index, patterns: list[_Pattern], binding: dict):
    if not patterns:
        yield binding
        return
    pattern, rest = patterns[0], patterns[1:]
    s = _resolve(pattern.s, binding)
    p = _resolve(pattern.p, binding)
    o = _resolve(pattern.o, binding)
    g = _resolve(pattern.g, binding) if pattern.g is not None else None
    for q in index.candidates(s, p, o):
        if s is not None and q.s != s:
            continue
        if p is not None and q.p != p:
            continue
        if o is not None and q.o != o:
            continue
        if pattern.g is not None and g is not None and q.g != g:
            continue
        extended = dict(binding)
        slots = [(pattern.s, q.s), (pattern.p, q.p), (pattern.o, q.o)]
        if pattern.g is not None:
            slots.append((pattern.g, q.g))
        # a variable repeated within one pattern must land on one value
        for term, value in slots:
            if term[0] != "var":
                continue
            bound = extended.get(term[1], value)
            if bound != value:
                break
            extended[term[1]] = value
        else:
            yield from _match_patterns(index, rest, extended)


def _term_sort_key(value) -> str:
    if value is None:
        return "￿"  # unbound sorts last
    return term_text(value)


def _term_to_obj(value):
    if value is None:
        return None
    if isinstance(value, Literal):
        if value.kind in LITERAL_KINDS:
            return {value.kind: value.lexical}
        return {"datatype": value.kind, "value": value.lexical}
    return {"iri": value}


_NUMERIC_KINDS = ("integer", "decimal")


def _filter_passes(flt: dict, binding: dict) -> bool:
    value = binding.get(flt["var"])
    if value is None:
        return False
    op = flt["op"]
    if op == "eq":
        return value == flt["value"]
    if op == "prefix":
        text = value.lexical if isinstance(value, Literal) else value
        return text.startswith(flt["prefix"])
    if op == "range":
        if not isinstance(value, Literal):
            return False
        if value.kind in _NUMERIC_KINDS:
            try:
                v = float(value.lexical)
            except ValueError:
                return False
            low, high = flt["min"], flt["max"]
            return (low is None or v >= float(low)) and (high is None or v <= float(high))
        if value.kind == "date":
            low, high = flt["min"], flt["max"]
            return (low is None or value.lexical >= str(low)) and (high is None or value.lexical <= str(high))
        return False
    raise MalformedQuery(f"unknown filter op {op!r}")


def _parse_filters(doc, known_vars: set) -> list[dict]:
    filters = doc.get("filters", [])
    if not isinstance(filters, list):
        raise MalformedQuery("'filters' must be a list")
    parsed = []
    for i, obj in enumerate(filters):
        where = f"filters[{i}]"
        if not isinstance(obj, dict) or "var" not in obj or "op" not in obj:
            raise MalformedQuery(f"{where}: needs 'var' and 'op'")
        var = obj["var"]
        if var not in known_vars:
            raise MalformedQuery(f"{where}: unknown variable {var!r}")
        op = obj["op"]
        if op == "eq":
            kind, value = _query_term(obj.get("value"), where)
            if kind != "term":
                raise MalformedQuery(f"{where}: eq compares against a fixed term")
            parsed.append({"var": var, "op": "eq", "value": value})
        elif op == "prefix":
            prefix = obj.get("value")
            if not isinstance(prefix, str):
                raise MalformedQuery(f"{where}: prefix needs a string value")
            parsed.append({"var": var, "op": "prefix", "prefix": prefix})
        elif op == "range":
            if "min" not in obj and "max" not in obj:
                raise MalformedQuery(f"{where}: range needs min and/or max")
            parsed.append({"var": var, "op": "range", "min": obj.get("min"), "max": obj.get("max")})
        else:
            raise MalformedQuery(f"{where}: unknown filter op {op!r}")
    return parsed


def run_query(snapshot: dict, doc: dict) -> dict:
    """Evaluate a query document against a store snapshot.

    Returns plain-JSON results: distinct selected rows, or grouped counts
    when group_by is present. Grouped counts count distinct bindings of the
    first selected variable; solutions whose group variable is unbound fall
    into the reserved "Unknown" bucket, listed last.
    """
    if not isinstance(doc, dict):
        raise MalformedQuery("query must be an object")
    pattern_docs = doc.get("patterns")
    if not isinstance(pattern_docs, list) or not pattern_docs:
        raise MalformedQuery("query needs a non-empty 'patterns' list")
    patterns = [_parse_pattern(p, f"patterns[{i}]") for i, p in enumerate(pattern_docs)]

    optional_docs = doc.get("optional", [])
    if not isinstance(optional_docs, list):
        raise MalformedQuery("'optional' must be a list")
    optional_groups = []
    for i, group in enumerate(optional_docs):
        if isinstance(group, list) and group and isinstance(group[0], list):
            optional_groups.append([_parse_pattern(p, f"optional[{i}][{j}]") for j, p in enumerate(group)])
        else:
            optional_groups.append([_parse_pattern(group, f"optional[{i}]")])

    known_vars = set()
    for p in patterns:
        known_vars.update(p.variables())
    for group in optional_groups:
        for p in group:
            known_vars.update(p.variables())

    select = doc.get("select")
    if not isinstance(select, list) or not select:
        raise MalformedQuery("query needs a non-empty 'select' list")
    for var in select:
        if not isinstance(var, str) or not var.startswith("?"):
            raise MalformedQuery(f"select names variables, got {var!r}")
        if var not in known_vars:
            raise MalformedQuery(f"selected variable {var!r} appears in no pattern")

    group_by = doc.get("group_by")
    aggregate = doc.get("aggregate")
    if (group_by is None) != (aggregate is None):
        raise MalformedQuery("group_by and aggregate come together")
    if aggregate is not None and aggregate != "count":
        raise MalformedQuery(f"unknown aggregate {aggregate!r}")
    if group_by is not None and group_by not in known_vars:
        raise MalformedQuery(f"group_by variable {group_by!r} appears in no pattern")

    filters = _parse_filters(doc, known_vars)

    scope = doc.get("graphs")
    if scope is not None:
        if not isinstance(scope, list) or not all(isinstance(g, str) for g in scope):
            raise MalformedQuery("'graphs' must be a list of IRIs")
        quads = [q for g in scope for q in snapshot.get(g, ())]
    else:
        quads = [q for qs in snapshot.values() for q in qs]
    index = _Index(quads)

    solutions = []
    for binding in _match_patterns(index, patterns, {}):
        partials = [binding]
        for group in optional_groups:
            extended = []
            for partial in partials:
                matches = list(_match_patterns(index, group, partial))
                extended.extend(matches if matches else [partial])
            partials = extended
        for solution in partials:
            if all(_filter_passes(f, solution) for f in filters):
                solutions.append(solution)

    if group_by is None:
        rows = {tuple(sol.get(var) for var in select) for sol in solutions}
        ordered = sorted(rows, key=lambda row: tuple(_term_sort_key(v) for v in row))
        return {
            "columns": list(select),
            "count": len(ordered),
            "rows": [[_term_to_obj(v) for v in row] for row in ordered],
        }

    primary = select[0]
    pairs = {(sol.get(primary), sol.get(group_by)) for sol in solutions}
    counts: dict = {}
    for _, group_value in pairs:
        counts[group_value] = counts.get(group_value, 0) + 1
    bound = sorted((g for g in counts if g is not None), key=_term_sort_key)
    rows = [{"count": counts[g], "group": _term_to_obj(g)} for g in bound]
    if None in counts:
        rows.append({"count": counts[None], "group": UNKNOWN_LABEL})
    return {"group_by": group_by, "rows": rows, "total": sum(counts.values())}
