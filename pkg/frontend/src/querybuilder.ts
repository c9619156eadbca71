// Query builder state and its translation to the service query document.
// The builder exposes only what the document grammar can say: an entity
// class, property-path filter clauses, an optional group-by path, and a
// visualization choice. There is no free-form query text.

import type { FilterDoc, OntologyDoc, OntologyProperty, Pattern, QueryDoc } from "./types.js";

export const RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/** Ranges that end a path: values, not entities. */
const LITERAL_KINDS = new Set(["text", "integer", "decimal", "date"]);

export type FilterOp = "eq" | "prefix" | "range";

export interface FilterClause {
  /** Property names walked from the entity; length >= 1. */
  path: string[];
  op: FilterOp;
  value?: string;
  min?: string;
  max?: string;
}

export interface QueryBuilderState {
  entityClass: string;
  filters: FilterClause[];
  groupBy: string[] | null;
  visualization: "table" | "bar";
}

export function emptyState(): QueryBuilderState {
  return { entityClass: "", filters: [], groupBy: null, visualization: "table" };
}

export class QueryBuildError extends Error {}

function classIndex(ontology: OntologyDoc): Map<string, string | undefined> {
  return new Map(ontology.classes.map((c) => [c.name, c.subclass_of]));
}

/** The class itself followed by its superclasses, nearest first. */
export function classAncestry(ontology: OntologyDoc, name: string): string[] {
  const parents = classIndex(ontology);
  const chain: string[] = [];
  let cursor: string | undefined = name;
  while (cursor !== undefined && parents.has(cursor) && !chain.includes(cursor)) {
    chain.push(cursor);
    cursor = parents.get(cursor);
  }
  return chain;
}

/** Properties applicable to a class: declared on it or on an ancestor. */
export function propertiesOf(ontology: OntologyDoc, className: string): OntologyProperty[] {
  const ancestry = new Set(classAncestry(ontology, className));
  return ontology.properties
    .filter((p) => ancestry.has(p.domain))
    .sort((a, b) => (a.name < b.name ? -1 : a.name > b.name ? 1 : 0));
}

export function isLiteralRange(range: string): boolean {
  return LITERAL_KINDS.has(range);
}

/**
 * Resolve a property path hop by hop, starting from the entity class.
 * Returns the property definition of every hop; throws when a hop does not
 * apply to the class reached so far or tries to walk past a literal.
 */
export function resolvePath(ontology: OntologyDoc, entityClass: string, path: string[]): OntologyProperty[] {
  if (path.length === 0) throw new QueryBuildError("empty property path");
  let cursor = entityClass;
  const hops: OntologyProperty[] = [];
  for (const segment of path) {
    if (isLiteralRange(cursor)) {
      throw new QueryBuildError(`cannot follow '${segment}' past a ${cursor} value`);
    }
    const candidates = propertiesOf(ontology, cursor);
    const property = candidates.find((p) => p.name === segment);
    if (!property) {
      throw new QueryBuildError(`'${segment}' is not a property of ${cursor}`);
    }
    hops.push(property);
    cursor = property.range;
  }
  return hops;
}

function eqTerm(range: string, value: string): FilterDoc["value"] {
  if (range === "text") return value;
  if (LITERAL_KINDS.has(range)) return { [range]: value };
  // entity-valued: the user picks an IRI from the result of another query
  return { iri: value };
}

/**
 * Serialize builder state into the query document the service accepts.
 * Filters become required pattern chains plus filter clauses; the group-by
 * path becomes an optional group so entities missing the value land in the
 * Unknown bucket instead of dropping out.
 */
export function buildQueryDoc(
  state: QueryBuilderState,
  ontologyNamespace: string,
  ontology: OntologyDoc,
): QueryDoc & { aggregate?: "count" } {
  if (!state.entityClass) throw new QueryBuildError("choose an entity class first");
  if (!ontology.classes.some((c) => c.name === state.entityClass)) {
    throw new QueryBuildError(`unknown entity class '${state.entityClass}'`);
  }

  const patterns: Pattern[] = [["?s", { iri: RDF_TYPE }, { iri: ontologyNamespace + state.entityClass }]];
  const filters: FilterDoc[] = [];

  state.filters.forEach((clause, index) => {
    const hops = resolvePath(ontology, state.entityClass, clause.path);
    let subject = "?s";
    let variable = "";
    clause.path.forEach((segment, hop) => {
      variable = `?f${index}_${hop}`;
      patterns.push([subject, { iri: ontologyNamespace + segment }, variable]);
      subject = variable;
    });
    const terminal = hops[hops.length - 1]!;
    if (clause.op === "eq") {
      if (!clause.value) throw new QueryBuildError("eq filter needs a value");
      filters.push({ var: variable, op: "eq", value: eqTerm(terminal.range, clause.value) });
    } else if (clause.op === "prefix") {
      if (!clause.value) throw new QueryBuildError("prefix filter needs a value");
      filters.push({ var: variable, op: "prefix", value: clause.value });
    } else {
      if (clause.min === undefined && clause.max === undefined) {
        throw new QueryBuildError("range filter needs min and/or max");
      }
      if (!LITERAL_KINDS.has(terminal.range) || terminal.range === "text") {
        throw new QueryBuildError(`range filter needs a dated or numeric property, not ${terminal.range}`);
      }
      const doc: FilterDoc = { var: variable, op: "range" };
      if (clause.min !== undefined) doc.min = clause.min;
      if (clause.max !== undefined) doc.max = clause.max;
      filters.push(doc);
    }
  });

  const doc: QueryDoc & { aggregate?: "count" } = { select: ["?s"], patterns };
  if (filters.length > 0) doc.filters = filters;

  if (state.groupBy !== null) {
    resolvePath(ontology, state.entityClass, state.groupBy);
    const group: Pattern[] = [];
    let subject = "?s";
    state.groupBy.forEach((segment, hop) => {
      const variable = hop === state.groupBy!.length - 1 ? "?group" : `?g${hop}`;
      group.push([subject, { iri: ontologyNamespace + segment }, variable]);
      subject = variable;
    });
    doc.optional = [group];
    doc.group_by = "?group";
    doc.aggregate = "count";
  } else if (state.visualization === "bar") {
    throw new QueryBuildError("a bar chart needs a group-by property");
  }

  return doc;
}
