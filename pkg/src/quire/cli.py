"""Command-line interface.

One subcommand per pipeline step, so the whole workflow scripts cleanly:

    quire init --data ./ws --prefix https://example.org/kb
    quire import-template ./ws crew-list.json
    quire import-record ./ws r0001.json
    quire publish ./ws r0001
    quire auto-match ./ws --rules rules.json
    quire transform ./ws
    quire query ./ws --file query.json

Machine-readable output (--format structured) goes to stdout as canonical
JSON; human tables are the default. Diagnostics go to stderr. Exit codes:
0 success, 1 expected failure (bad input, unknown ids, usage), 2 internal
error. Mutating commands take an advisory lock on the data directory, so
concurrent invocations serialize instead of corrupting state.
"""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import json
import os
import socket
import sys
from pathlib import Path

from .canonical import canonical_json_bytes
from .config import EngineConfig
from .curation import local_to_obj, master_to_obj, match_rules_from_doc, term_to_obj
from .engine import Workspace
from .errors import DocumentParseError, EngineError, PortInUse

MUTATING = {
    "init",
    "import-template",
    "evolve-template",
    "import-record",
    "publish",
    "import-ontology",
    "import-mapping",
    "auto-match",
    "match",
    "unmatch",
    "set-preferred",
    "set-preferred-term",
    "set-broader",
    "transform",
    "import-quads",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quire", description="archival data management engine")
    parser.add_argument(
        "--data",
        default=os.environ.get("QUIRE_DATA", "data"),
        help="data directory (or set QUIRE_DATA)",
    )
    parser.add_argument("--format", choices=("table", "structured"), default="table")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a workspace")
    p.add_argument("--prefix", default=None, help="URI prefix for minted IRIs")
    p.add_argument("--config", default=None, help="configuration JSON file")

    p = sub.add_parser("import-template", help="store a template version")
    p.add_argument("file")

    p = sub.add_parser("evolve-template", help="apply an additive template change")
    p.add_argument("template_id")
    p.add_argument("file", help="change document")

    p = sub.add_parser("import-record", help="store a record version")
    p.add_argument("file")
    p.add_argument("--author", default="")
    p.add_argument("--timestamp", default="")

    p = sub.add_parser("publish", help="publish a record version into curation")
    p.add_argument("record_id")
    p.add_argument("--version", type=int, default=None)

    p = sub.add_parser("import-ontology", help="store the target schema")
    p.add_argument("file")

    p = sub.add_parser("import-mapping", help="validate and store a mapping")
    p.add_argument("file")

    p = sub.add_parser("auto-match", help="apply matching rules")
    p.add_argument("--rules", required=True, help="rules JSON file")

    p = sub.add_parser("match", help="merge instances into one identity")
    p.add_argument("entity_type")
    p.add_argument("ids", nargs="+")

    p = sub.add_parser("unmatch", help="split a local occurrence out of its identity")
    p.add_argument("entity_type")
    p.add_argument("local_id")

    p = sub.add_parser("set-preferred", help="set a preferred attribute value")
    p.add_argument("entity_type")
    p.add_argument("master_id")
    p.add_argument("role")
    p.add_argument("value")

    p = sub.add_parser("set-preferred-term", help="set a term's preferred label")
    p.add_argument("vocabulary")
    p.add_argument("raw")
    p.add_argument("preferred")

    p = sub.add_parser("set-broader", help="add a broader-term edge")
    p.add_argument("vocabulary")
    p.add_argument("raw")
    p.add_argument("broader")

    p = sub.add_parser("transform", help="derive graphs from published records")
    p.add_argument("--record", action="append", default=None, help="limit to one record (repeatable)")

    p = sub.add_parser("query", help="run a query document")
    p.add_argument("--file", default=None, help="query JSON (default: stdin)")

    p = sub.add_parser("export", help="export graphs as canonical N-Quads")
    p.add_argument("--graphs", default=None, help="comma-separated graph IRIs (default: all)")

    p = sub.add_parser("import-quads", help="replace graphs from an N-Quads file")
    p.add_argument("file")

    p = sub.add_parser("quality", help="measure completeness, consistency, conciseness")
    p.add_argument("--rules", default=None, help="rules JSON for the conciseness dimension")

    p = sub.add_parser("provenance", help="trace an IRI back to its source cells")
    p.add_argument("iri")

    p = sub.add_parser("list", help="list templates, records, identities, or terms")
    p.add_argument("what", choices=("templates", "records", "locals", "masters", "terms", "graphs"))
    p.add_argument("name", nargs="?", default=None, help="entity type or vocabulary where applicable")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _read_json(path: str):
    try:
        with open(path, "rb") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise EngineError(f"no such file: {path}", code="missing-file") from None
    except json.JSONDecodeError as exc:
        raise DocumentParseError(f"{path}: {exc}", line=exc.lineno, column=exc.colno) from exc


def _emit(args, obj, lines):
    if args.format == "structured":
        sys.stdout.write(canonical_json_bytes(obj).decode("utf-8"))
    else:
        for line in lines:
            print(line)


def _rate(value) -> str:
    return "-" if value is None else f"{value:.3f}"


def run(args) -> int:
    if args.command == "init":
        if args.config is not None:
            config = EngineConfig.from_doc(_read_json(args.config))
            if args.prefix is not None:
                config = EngineConfig.from_doc({**config.to_doc(), "uri_prefix": args.prefix})
        elif args.prefix is not None:
            config = EngineConfig(uri_prefix=args.prefix)
        else:
            config = EngineConfig()
        ws = Workspace.init(Path(args.data), config)
        _emit(args, {"data": str(ws.data_dir), "uri_prefix": ws.config.uri_prefix}, [f"initialized {ws.data_dir}"])
        return 0

    ws = Workspace.open(Path(args.data))

    if args.command == "import-template":
        template = ws.import_template(_read_json(args.file))
        _emit(
            args,
            {"id": template.id, "version": template.version},
            [f"template {template.id} version {template.version}"],
        )
    elif args.command == "evolve-template":
        template = ws.evolve_template(args.template_id, _read_json(args.file))
        _emit(
            args,
            {"id": template.id, "version": template.version},
            [f"template {template.id} now version {template.version}"],
        )
    elif args.command == "import-record":
        record, info = ws.import_record(_read_json(args.file), author=args.author, timestamp=args.timestamp)
        _emit(
            args,
            {"id": record.id, "content_hash": info.content_hash, "version": info.version},
            [f"record {record.id} version {info.version} ({info.content_hash[:12]})"],
        )
    elif args.command == "publish":
        result = ws.publish(args.record_id, args.version)
        _emit(
            args,
            result,
            [
                f"published {result['record']} version {result['version']}: "
                f"{result['entities']} entity occurrences, {result['terms']} term appearances"
            ],
        )
    elif args.command == "import-ontology":
        ontology = ws.import_ontology(Path(args.file).read_text("utf-8"))
        _emit(
            args,
            {"classes": len(ontology.classes), "properties": len(ontology.properties)},
            [f"schema: {len(ontology.classes)} classes, {len(ontology.properties)} properties"],
        )
    elif args.command == "import-mapping":
        report = ws.import_mapping(_read_json(args.file))
        lines = [("ok" if report.ok else "rejected")]
        lines += [f"error: {e}" for e in report.errors]
        lines += [f"warning: {w}" for w in report.warnings]
        _emit(args, report.to_obj(), lines)
        if not report.ok:
            return 1
    elif args.command == "auto-match":
        events = ws.auto_match_doc(_read_json(args.rules))
        obj = {"merges": [e.to_obj() for e in events]}
        lines = [f"{len(events)} merges"]
        for e in events:
            lines.append(f"  {e.entity_type}: {' + '.join(e.merged)} -> {e.survivor} ({e.origin})")
        _emit(args, obj, lines)
    elif args.command == "match":
        event = ws.curation.manual_match(args.entity_type, args.ids)
        _emit(args, event.to_obj(), [f"merged into {event.survivor}"])
    elif args.command == "unmatch":
        master = ws.curation.unmatch(args.entity_type, args.local_id)
        _emit(args, {"local": args.local_id, "master": master}, [f"{args.local_id} now stands alone in {master}"])
    elif args.command == "set-preferred":
        ws.curation.set_preferred(args.entity_type, args.master_id, args.role, args.value)
        _emit(args, {"master": args.master_id, "role": args.role, "value": args.value}, ["ok"])
    elif args.command == "set-preferred-term":
        ws.curation.set_preferred_term(args.vocabulary, args.raw, args.preferred)
        _emit(args, {"preferred": args.preferred, "raw": args.raw}, ["ok"])
    elif args.command == "set-broader":
        ws.curation.add_broader(args.vocabulary, args.raw, args.broader)
        _emit(args, {"broader": args.broader, "raw": args.raw}, ["ok"])
    elif args.command == "transform":
        report = ws.transform(args.record)
        lines = [f"commit {report['commit']}"]
        for iri, count in sorted(report["graphs"].items()):
            lines.append(f"  {count:7d}  {iri}")
        for event in report["uri_fallbacks"]:
            lines.append(f"  fallback: {event['record']} {event['table']}[{event['row']}] {event['uri']}")
        _emit(args, report, lines)
    elif args.command == "query":
        text = Path(args.file).read_text("utf-8") if args.file else sys.stdin.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DocumentParseError(f"query: {exc}", line=exc.lineno, column=exc.colno) from exc
        result = ws.query(doc)
        lines = []
        if "group_by" in result:
            for row in result["rows"]:
                group = row["group"]
                label = group if isinstance(group, str) else json.dumps(group, ensure_ascii=False, sort_keys=True)
                lines.append(f"{row['count']:7d}  {label}")
            lines.append(f"{result['total']:7d}  total")
        else:
            lines.append("\t".join(result["columns"]))
            for row in result["rows"]:
                lines.append(
                    "\t".join(
                        "-" if v is None else json.dumps(v, ensure_ascii=False, sort_keys=True) for v in row
                    )
                )
        _emit(args, result, lines)
    elif args.command == "export":
        graphs = args.graphs.split(",") if args.graphs else None
        sys.stdout.buffer.write(ws.export_nquads(graphs))
    elif args.command == "import-quads":
        result = ws.import_nquads(Path(args.file).read_text("utf-8"))
        _emit(args, result, [f"commit {result['commit']}: {len(result['graphs'])} graphs replaced"])
    elif args.command == "quality":
        rules = match_rules_from_doc(_read_json(args.rules)) if args.rules else None
        report = ws.quality_report(rules)
        lines = ["completeness:"]
        for entry in report["completeness"]:
            lines.append(
                f"  {entry['template']}/{entry['table']}.{entry['column']}: "
                f"{entry['filled']}/{entry['rows']} ({_rate(entry['rate'])})"
                + (" required" if entry["required"] else "")
            )
        lines.append("consistency (schema):")
        for entry in report["consistency"]["schema"]:
            lines.append(f"  {entry['problem']}: expected {entry['expected']}, found {entry['found']}")
            lines.append(f"    {entry['quad']}")
        lines.append("consistency (values):")
        for entry in report["consistency"]["values"]:
            lines.append(
                f"  {entry['template']}/{entry['table']}.{entry['column']} as {entry['kind']}: "
                f"{entry['parsed']}/{entry['total']} ({_rate(entry['rate'])})"
            )
        lines.append("conciseness:")
        for entry in report["conciseness"]:
            lines.append(
                f"  {entry['entity_type']}: {' '.join(entry['masters'])} share key {tuple(entry['key'])}"
            )
        _emit(args, report, lines)
    elif args.command == "provenance":
        result = ws.provenance_of(args.iri)
        lines = [f"{result['kind']}: {result['iri']}"]
        for anchor in result["anchors"]:
            lines.append(f"  {anchor['record_id']} {anchor['table']}[{anchor['row']}]")
            for column, value in anchor["cells"].items():
                lines.append(f"    {column}: {value!r}")
        _emit(args, result, lines)
    elif args.command == "list":
        _run_list(ws, args)
    elif args.command == "serve":
        _serve(ws, args.host, args.port)
    else:  # pragma: no cover - argparse enforces choices
        raise AssertionError(args.command)
    return 0


def _run_list(ws: Workspace, args):
    what = args.what
    if what == "templates":
        rows = [{"id": tid, "version": version} for tid, version in ws.records.list_templates()]
        _emit(args, {"templates": rows}, [f"{r['id']} (version {r['version']})" for r in rows])
    elif what == "records":
        rows = []
        for record_id in ws.records.list_records():
            version = ws.records.published_version(record_id)
            rows.append({"id": record_id, "published_version": version})
        _emit(
            args,
            {"records": rows},
            [f"{r['id']} (published: {r['published_version'] or '-'})" for r in rows],
        )
    elif what == "locals":
        if not args.name:
            raise EngineError("list locals needs an entity type", code="missing-argument")
        locals_ = ws.curation.locals_of(args.name)
        rows = [local_to_obj(locals_[lid], ws.curation.master_of_local(args.name, lid)) for lid in sorted(locals_)]
        _emit(args, {"locals": rows}, [f"{r['id']} -> {r['master']} {r['attributes']}" for r in rows])
    elif what == "masters":
        if not args.name:
            raise EngineError("list masters needs an entity type", code="missing-argument")
        masters = ws.curation.masters_of(args.name)
        rows = [master_to_obj(masters[mid]) for mid in sorted(masters)]
        _emit(args, {"masters": rows}, [f"{r['id']}: {len(r['members'])} members" for r in rows])
    elif what == "terms":
        if not args.name:
            raise EngineError("list terms needs a vocabulary", code="missing-argument")
        terms = ws.curation.terms_of(args.name)
        rows = [term_to_obj(raw, terms[raw]) for raw in sorted(terms)]
        _emit(
            args,
            {"terms": rows},
            [f"{r['raw']!r}: {len(r['appearances'])} appearances" for r in rows],
        )
    else:  # graphs
        counts = ws.graphs.quad_counts()
        rows = [{"graph": iri, "quads": counts[iri]} for iri in sorted(counts)]
        _emit(args, {"graphs": rows}, [f"{r['quads']:7d}  {r['graph']}" for r in rows])


def _serve(ws: Workspace, host: str, port: int):
    import uvicorn

    from .service import build_app

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        raise PortInUse(f"cannot bind {host}:{port}: {exc}") from exc
    finally:
        probe.close()
    uvicorn.run(build_app(ws), host=host, port=port, log_level="warning")


@contextlib.contextmanager
def _data_lock(data_dir: Path):
    data_dir.mkdir(parents=True, exist_ok=True)
    path = data_dir / ".lock"
    with open(path, "w") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        if args.command in MUTATING:
            with _data_lock(Path(args.data)):
                return run(args)
        return run(args)
    except EngineError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 0
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
