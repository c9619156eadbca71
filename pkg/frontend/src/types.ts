// Wire shapes of the service API. Field names match the JSON exactly;
// nothing here is derived or renamed on the client.

/** A term in query results: plain IRI ref, or a typed literal keyed by kind. */
export type TermObj = { iri: string } | { [kind: string]: string };

export type CellValue = TermObj | string | null;

export interface PlainResult {
  columns: string[];
  rows: CellValue[][];
  count: number;
}

export interface GroupedRow {
  group: TermObj | "Unknown";
  count: number;
}

export interface GroupedResult {
  group_by: string;
  rows: GroupedRow[];
  total: number;
}

export type QueryResult = PlainResult | GroupedResult;

export function isGrouped(r: QueryResult): r is GroupedResult {
  return "group_by" in r;
}

/** Position of a value inside a transcribed record. */
export interface Anchor {
  record_id: string;
  table: string;
  row: number;
  columns: string[];
}

export interface LocalOccurrence {
  id: string;
  anchor: Anchor;
  attributes: Record<string, string>;
  master: string;
}

export interface Master {
  id: string;
  members: string[];
  /** Canonical attributes; the list endpoint includes them. */
  attributes?: Record<string, string>;
  preferred_attributes: Record<string, string>;
  enrichments: Record<string, unknown>;
}

export interface VocabTerm {
  raw: string;
  preferred: string | null;
  broader: string[];
  appearances: Anchor[];
}

/** Anchor enriched with the verbatim cell values it points at. */
export interface ProvenanceAnchor extends Anchor {
  cells: Record<string, string>;
  record_version?: number;
}

export interface ProvenanceTrail {
  iri: string;
  kind: string;
  anchors: ProvenanceAnchor[];
  vocabulary?: string;
  raw?: string;
  record?: string;
  published_version?: number | null;
}

export interface RecordCell {
  raw: string;
  note?: string;
}

export interface RecordRow {
  cells: Record<string, RecordCell>;
  deleted?: boolean;
}

export interface RecordDoc {
  id: string;
  template_id: string;
  template_version: number;
  tables: Record<string, RecordRow[]>;
  metadata: { created: string; modified: string; transcriber: string };
}

export interface RecordSummary {
  id: string;
  latest_version: number;
  published_version: number | null;
}

export interface Job {
  id: string;
  kind: string;
  scope: string[];
  state: "queued" | "running" | "done" | "failed";
  report?: unknown;
  error?: { code: string; message: string };
}

export interface OntologyClass {
  name: string;
  subclass_of?: string;
}

export interface OntologyProperty {
  name: string;
  domain: string;
  range: string;
}

export interface OntologyDoc {
  classes: OntologyClass[];
  properties: OntologyProperty[];
}

export interface WorkspaceConfig {
  uri_prefix: string;
  ontology_namespace: string;
  artifact_namespace: string;
  graph_namespace: string;
  entity_types: string[];
  vocabularies: string[];
}

export interface MergeEvent {
  entity_type: string;
  survivor: string;
  merged: string[];
  origin: string;
  key: string[] | null;
  conflicts: { role: string; kept: string; dropped: string }[];
}

/** Query document grammar accepted by POST /query. */
export type PatternTerm = string | { iri: string } | { [kind: string]: string };
export type Pattern = PatternTerm[];

export interface FilterDoc {
  var: string;
  op: string;
  value?: PatternTerm;
  min?: PatternTerm;
  max?: PatternTerm;
}

export interface QueryDoc {
  select: string[];
  patterns: Pattern[];
  optional?: (Pattern | Pattern[])[];
  filters?: FilterDoc[];
  group_by?: string;
}
