"""HTTP service.

Exposes the whole workflow over JSON endpoints so the browser UI and
external scripts can drive it: template and record management, publishing,
curation, mapping, background transform jobs, queries and exports.

Conventions:
  - errors are JSON bodies {"code", "message"} with a meaningful status
  - record writes read the author from the X-Author header
  - long-running work (transform, auto-match) goes through /jobs and is
    polled; a failed job leaves the graphs exactly as they were
  - the built browser UI, when present in frontend/dist, is served from /
"""

from __future__ import annotations

import csv
import io
import json
import threading
from pathlib import Path

from fastapi import Body, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles

from .curation import local_to_obj, master_to_obj, match_rules_from_doc, term_to_obj
from .engine import Workspace
from .errors import (
    AlreadySingleton,
    CycleDetected,
    DocumentParseError,
    EmptySlug,
    EngineError,
    GraphMismatch,
    JobConflict,
    MalformedQuery,
    MatchConflict,
    MissingMapping,
    RecordInvalid,
    RecordNotFound,
    StoreCorrupt,
    TemplateChangeRejected,
    TemplateInvalid,
    TemplateNotFound,
    TypeMismatch,
    UnknownIri,
    UnknownJob,
    UnknownRole,
    UnknownTarget,
    VersionNotFound,
)
from .ontology import ontology_to_doc
from .records import record_to_doc, template_to_doc

_STATUS = {
    TemplateNotFound: 404,
    RecordNotFound: 404,
    VersionNotFound: 404,
    UnknownTarget: 404,
    UnknownIri: 404,
    UnknownJob: 404,
    MissingMapping: 404,
    MatchConflict: 409,
    JobConflict: 409,
    TemplateChangeRejected: 409,
    AlreadySingleton: 409,
    RecordInvalid: 400,
    TemplateInvalid: 400,
    DocumentParseError: 400,
    MalformedQuery: 400,
    UnknownRole: 400,
    CycleDetected: 400,
    EmptySlug: 400,
    TypeMismatch: 400,
    GraphMismatch: 400,
    StoreCorrupt: 500,
}


def _error_response(exc: EngineError) -> JSONResponse:
    body = {"code": exc.code or "error", "message": str(exc)}
    if isinstance(exc, RecordInvalid):
        body["violations"] = [
            {"rule": v.rule, "message": v.message, "table": v.table, "row": v.row, "column": v.column}
            for v in exc.violations
        ]
    return JSONResponse(status_code=_STATUS.get(type(exc), 400), content=body)


ALL_SCOPE = "*"


class JobManager:
    """Background workers for transform and auto-match.

    One thread per job. Two jobs conflict when their scopes can touch the
    same state: auto-match touches all of curation, a full transform touches
    every graph, so only transforms over disjoint record sets may overlap.
    Terminal job states are immutable.
    """

    def __init__(self, ws: Workspace):
        self._ws = ws
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}
        self._next = 1

    def _scope_of(self, kind: str, payload: dict) -> frozenset:
        if kind == "transform" and payload.get("records"):
            return frozenset(str(r) for r in payload["records"])
        return frozenset((ALL_SCOPE,))

    def _conflicts(self, a: frozenset, b: frozenset) -> bool:
        return bool(a & b) or ALL_SCOPE in a or ALL_SCOPE in b

    def submit(self, kind: str, payload: dict) -> dict:
        if kind not in ("transform", "auto-match"):
            raise EngineError(f"unknown job kind: {kind}", code="unknown-job-kind")
        scope = self._scope_of(kind, payload)
        with self._lock:
            for job in self._jobs.values():
                if job["state"] in ("queued", "running") and self._conflicts(scope, frozenset(job["scope"])):
                    raise JobConflict(f"job {job['id']} is already working on an overlapping scope")
            job_id = f"j{self._next:06d}"
            self._next += 1
            job = {"id": job_id, "kind": kind, "scope": sorted(scope), "state": "queued"}
            self._jobs[job_id] = job
            snapshot = dict(job)
        thread = threading.Thread(target=self._run, args=(job_id, kind, payload), daemon=True)
        thread.start()
        return snapshot

    def _run(self, job_id: str, kind: str, payload: dict):
        with self._lock:
            self._jobs[job_id]["state"] = "running"
        try:
            if kind == "transform":
                report = self._ws.transform(payload.get("records") or None)
            else:
                events = self._ws.auto_match_doc(payload.get("rules", []))
                report = {"merges": [e.to_obj() for e in events]}
        except EngineError as exc:
            with self._lock:
                self._jobs[job_id].update(state="failed", error={"code": exc.code or "error", "message": str(exc)})
        except Exception as exc:  # noqa: BLE001 - job thread must not die silently
            with self._lock:
                self._jobs[job_id].update(state="failed", error={"code": "internal", "message": repr(exc)})
        else:
            with self._lock:
                self._jobs[job_id].update(state="done", report=report)

    def get(self, job_id: str) -> dict:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJob(f"no such job: {job_id}")
            return dict(job)

    def list(self) -> list[dict]:
        with self._lock:
            return [dict(self._jobs[j]) for j in sorted(self._jobs)]


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if "iri" in value:
        return value["iri"]
    if "datatype" in value:
        return value["value"]
    return next(iter(value.values()))


def _result_csv(result: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if "group_by" in result:
        writer.writerow(["group", "count"])
        for row in result["rows"]:
            writer.writerow([_csv_cell(row["group"]), row["count"]])
    else:
        writer.writerow([c.lstrip("?") for c in result["columns"]])
        for row in result["rows"]:
            writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def build_app(ws: Workspace, static_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="quire", docs_url=None, redoc_url=None)
    jobs = JobManager(ws)

    @app.exception_handler(EngineError)
    async def _engine_error(_request: Request, exc: EngineError):
        return _error_response(exc)

    # --- workspace ----------------------------------------------------------

    @app.get("/config")
    def get_config():
        return ws.config.to_doc()

    # --- templates ----------------------------------------------------------

    @app.get("/templates")
    def list_templates():
        return [{"id": tid, "version": version} for tid, version in ws.records.list_templates()]

    @app.post("/templates", status_code=201)
    def import_template(doc: dict = Body(...)):
        template = ws.import_template(doc)
        return {"id": template.id, "version": template.version}

    @app.get("/templates/{template_id}")
    def get_template(template_id: str, version: int | None = Query(default=None)):
        return template_to_doc(ws.records.get_template(template_id, version))

    @app.post("/templates/{template_id}/evolve")
    def evolve_template(template_id: str, change: dict = Body(...)):
        template = ws.evolve_template(template_id, change)
        return {"id": template.id, "version": template.version}

    # --- records ------------------------------------------------------------

    @app.get("/records")
    def list_records():
        out = []
        for record_id in ws.records.list_records():
            versions = ws.records.record_versions(record_id)
            out.append(
                {
                    "id": record_id,
                    "latest_version": versions[-1].version if versions else 0,
                    "published_version": ws.records.published_version(record_id),
                }
            )
        return out

    @app.post("/records", status_code=201)
    def import_record(
        doc: dict = Body(...),
        x_author: str = Header(default=""),
        x_timestamp: str = Header(default=""),
    ):
        record, info = ws.import_record(doc, author=x_author, timestamp=x_timestamp)
        return {"id": record.id, "version": info.version, "content_hash": info.content_hash}

    @app.get("/records/{record_id}")
    def get_record(record_id: str, version: int | None = Query(default=None)):
        return record_to_doc(ws.records.get_record(record_id, version))

    @app.get("/records/{record_id}/versions")
    def record_versions(record_id: str):
        return [
            {"version": v.version, "author": v.author, "timestamp": v.timestamp, "content_hash": v.content_hash}
            for v in ws.records.record_versions(record_id)
        ]

    @app.post("/records/{record_id}/publish")
    def publish_record(record_id: str, body: dict = Body(default={})):
        return ws.publish(record_id, body.get("version"))

    # --- curation -----------------------------------------------------------

    @app.get("/curation/{entity_type}/locals")
    def curation_locals(entity_type: str):
        locals_ = ws.curation.locals_of(entity_type)
        return [
            local_to_obj(locals_[lid], ws.curation.master_of_local(entity_type, lid)) for lid in sorted(locals_)
        ]

    @app.get("/curation/{entity_type}/masters")
    def curation_masters(entity_type: str):
        masters = ws.curation.masters_of(entity_type)
        out = []
        for mid in sorted(masters):
            obj = master_to_obj(masters[mid])
            obj["attributes"] = ws.curation.canonical_attributes(entity_type, mid)
            out.append(obj)
        return out

    @app.post("/curation/match")
    def curation_match(body: dict = Body(...)):
        event = ws.curation.manual_match(body["entity_type"], list(body.get("ids", ())))
        return event.to_obj()

    @app.post("/curation/unmatch")
    def curation_unmatch(body: dict = Body(...)):
        master = ws.curation.unmatch(body["entity_type"], body["local_id"])
        return {"local": body["local_id"], "master": master}

    @app.post("/curation/preferred")
    def curation_preferred(body: dict = Body(...)):
        ws.curation.set_preferred(body["entity_type"], body["master_id"], body["role"], body.get("value", ""))
        return {"master": body["master_id"], "role": body["role"]}

    @app.post("/curation/candidates")
    def curation_candidates(body: dict = Body(...)):
        rules = match_rules_from_doc(body.get("rules", []))
        return [
            {
                "entity_type": c.entity_type,
                "key": list(c.key),
                "masters": list(c.masters),
                "rule_index": c.rule_index,
            }
            for c in ws.curation.duplicate_candidates(rules)
        ]

    # --- vocabularies ---------------------------------------------------------

    @app.get("/vocabularies")
    def list_vocabularies():
        return ws.curation.vocabularies()

    @app.get("/vocabularies/{name}/terms")
    def vocabulary_terms(name: str):
        terms = ws.curation.terms_of(name)
        return [term_to_obj(raw, terms[raw]) for raw in sorted(terms)]

    @app.post("/vocabularies/{name}/terms/preferred")
    def term_preferred(name: str, body: dict = Body(...)):
        ws.curation.set_preferred_term(name, body["raw"], body.get("preferred", ""))
        return {"raw": body["raw"]}

    @app.post("/vocabularies/{name}/terms/broader")
    def term_broader(name: str, body: dict = Body(...)):
        ws.curation.add_broader(name, body["raw"], body["broader"])
        return {"broader": body["broader"], "raw": body["raw"]}

    @app.delete("/vocabularies/{name}/terms/broader")
    def term_broader_remove(name: str, raw: str = Query(...), broader: str = Query(...)):
        ws.curation.remove_broader(name, raw, broader)
        return {"broader": broader, "raw": raw}

    # --- schema and mappings --------------------------------------------------

    @app.get("/ontology")
    def get_ontology():
        return ontology_to_doc(ws.ontology())

    @app.post("/ontology")
    async def import_ontology(request: Request):
        ontology = ws.import_ontology((await request.body()).decode("utf-8"))
        return {"classes": len(ontology.classes), "properties": len(ontology.properties)}

    @app.get("/mappings")
    def list_mappings():
        return sorted(p.stem for p in ws.mappings_dir.glob("*.json"))

    @app.get("/mappings/{template_id}")
    def get_mapping(template_id: str):
        return ws.mapping_doc(template_id)

    @app.post("/mappings")
    def import_mapping(doc: dict = Body(...)):
        report = ws.import_mapping(doc)
        if not report.ok:
            return JSONResponse(status_code=400, content={"code": "invalid-mapping", **report.to_obj()})
        return report.to_obj()

    # --- jobs -----------------------------------------------------------------

    @app.post("/jobs", status_code=202)
    def submit_job(body: dict = Body(...)):
        return jobs.submit(body.get("kind", ""), body)

    @app.get("/jobs")
    def list_jobs():
        return jobs.list()

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return jobs.get(job_id)

    # --- query and graphs ------------------------------------------------------

    @app.post("/query")
    def run_query(body: dict = Body(...), format: str = Query(default="json")):
        result = ws.query(body)
        if format == "csv":
            return PlainTextResponse(_result_csv(result), media_type="text/csv; charset=utf-8")
        return result

    @app.get("/graphs")
    def list_graphs():
        counts = ws.graphs.quad_counts()
        return [{"graph": iri, "quads": counts[iri]} for iri in sorted(counts)]

    @app.get("/graphs/export")
    def export_graphs(graphs: str | None = Query(default=None)):
        scope = graphs.split(",") if graphs else None
        return Response(content=ws.export_nquads(scope), media_type="application/n-quads")

    @app.post("/graphs/import")
    async def import_graphs(request: Request):
        return ws.import_nquads((await request.body()).decode("utf-8"))

    # --- provenance and quality --------------------------------------------------

    @app.get("/provenance/{iri:path}")
    def provenance(iri: str):
        return ws.provenance_of(iri)

    @app.get("/quality")
    def quality_get():
        return ws.quality_report()

    @app.post("/quality")
    def quality_post(body: dict = Body(default={})):
        rules = match_rules_from_doc(body["rules"]) if body.get("rules") else None
        return ws.quality_report(rules)

    # --- static UI ---------------------------------------------------------------

    dist = static_dir if static_dir is not None else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if dist.is_dir():
        app.mount("/", StaticFiles(directory=dist, html=True), name="ui")
    else:

        @app.get("/")
        def root():
            return {"service": "quire", "ui": "not built"}

    return app
