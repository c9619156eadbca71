// Thin typed client for the service API. Every method maps to exactly one
// endpoint; no response value is reshaped beyond JSON parsing, so anything
// the UI displays can be traced to an API resource.

import type {
  GroupedResult,
  Job,
  LocalOccurrence,
  Master,
  MergeEvent,
  OntologyDoc,
  PlainResult,
  ProvenanceTrail,
  QueryDoc,
  QueryResult,
  RecordDoc,
  RecordSummary,
  VocabTerm,
  WorkspaceConfig,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Service error envelope, kept verbatim: machine code plus human message. */
export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
    public readonly violations?: unknown[],
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseFrom(response: Response): Promise<never> {
  let code = "error";
  let message = `HTTP ${response.status}`;
  let violations: unknown[] | undefined;
  try {
    const body = await response.json();
    if (body && typeof body === "object") {
      if (typeof body.code === "string") code = body.code;
      if (typeof body.message === "string") message = body.message;
      if (Array.isArray(body.violations)) violations = body.violations;
      // FastAPI's own validation errors use {detail: ...}
      if (message === `HTTP ${response.status}` && body.detail !== undefined) {
        message = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      }
    }
  } catch {
    // non-JSON body: keep the status line
  }
  throw new ApiError(code, message, response.status, violations);
}

export class Client {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (...args) => globalThis.fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(this.base + path, init);
    if (!response.ok) await raiseFrom(response);
    return response;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request(path)).json();
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return response.json();
  }

  config(): Promise<WorkspaceConfig> {
    return this.getJson("/config");
  }

  ontology(): Promise<OntologyDoc> {
    return this.getJson("/ontology");
  }

  masters(entityType: string): Promise<Master[]> {
    return this.getJson(`/curation/${encodeURIComponent(entityType)}/masters`);
  }

  locals(entityType: string): Promise<LocalOccurrence[]> {
    return this.getJson(`/curation/${encodeURIComponent(entityType)}/locals`);
  }

  match(entityType: string, ids: string[]): Promise<MergeEvent> {
    return this.postJson("/curation/match", { entity_type: entityType, ids });
  }

  unmatch(entityType: string, localId: string): Promise<{ local: string; master: string }> {
    return this.postJson("/curation/unmatch", { entity_type: entityType, local_id: localId });
  }

  vocabularies(): Promise<string[]> {
    return this.getJson("/vocabularies");
  }

  terms(vocabulary: string): Promise<VocabTerm[]> {
    return this.getJson(`/vocabularies/${encodeURIComponent(vocabulary)}/terms`);
  }

  query(doc: QueryDoc & { aggregate?: string }): Promise<QueryResult> {
    return this.postJson("/query", doc);
  }

  queryGrouped(doc: QueryDoc & { aggregate?: string }): Promise<GroupedResult> {
    return this.postJson("/query", doc);
  }

  queryPlain(doc: QueryDoc): Promise<PlainResult> {
    return this.postJson("/query", doc);
  }

  /** CSV rendering of the same query; the text is served, never rebuilt here. */
  async queryCsv(doc: QueryDoc & { aggregate?: string }): Promise<string> {
    const response = await this.request("/query?format=csv", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
    return response.text();
  }

  provenance(iri: string): Promise<ProvenanceTrail> {
    return this.getJson(`/provenance/${encodeURI(iri)}`);
  }

  record(recordId: string, version?: number): Promise<RecordDoc> {
    const suffix = version === undefined ? "" : `?version=${version}`;
    return this.getJson(`/records/${encodeURIComponent(recordId)}${suffix}`);
  }

  records(): Promise<RecordSummary[]> {
    return this.getJson("/records");
  }

  submitJob(body: { kind: string; [key: string]: unknown }): Promise<Job> {
    return this.postJson("/jobs", body);
  }

  job(jobId: string): Promise<Job> {
    return this.getJson(`/jobs/${encodeURIComponent(jobId)}`);
  }

  graphs(): Promise<{ graph: string; quads: number }[]> {
    return this.getJson("/graphs");
  }
}
