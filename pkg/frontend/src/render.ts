// HTML-string renderers shared by the browser shell. Kept free of DOM
// globals so they run under plain node in tests.

import type { CellValue, Master, PlainResult, ProvenanceTrail } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

/** Render one result cell exactly as the service sent it. */
export function cellText(value: CellValue): string {
  if (value === null) return "";
  if (typeof value === "string") return value;
  if ("iri" in value && typeof value.iri === "string") return value.iri;
  const first = Object.values(value)[0];
  return first === undefined ? "" : String(first);
}

function isIri(value: CellValue): value is { iri: string } {
  return value !== null && typeof value === "object" && "iri" in value && typeof value.iri === "string";
}

/** Plain result table; IRI cells become entity links for the drill-down. */
export function renderPlainTable(result: PlainResult): string {
  if (result.rows.length === 0) {
    return '<div class="empty-state">No results</div>';
  }
  const head = result.columns.map((c) => `<th>${escapeHtml(c.replace(/^\?/, ""))}</th>`).join("");
  const body = result.rows
    .map((row) => {
      const cells = row
        .map((value) => {
          if (isIri(value)) {
            const iri = escapeHtml(value.iri);
            return `<td><a class="entity-link" href="#entity=${encodeURIComponent(value.iri)}" data-iri="${iri}">${iri}</a></td>`;
          }
          return `<td>${escapeHtml(cellText(value))}</td>`;
        })
        .join("");
      return `<tr>${cells}</tr>`;
    })
    .join("");
  return `<table class="result-table"><thead><tr>${head}</tr></thead><tbody>${body}</tbody></table>` +
    `<p class="result-count">${result.count} rows</p>`;
}

/**
 * Master list for the curation workbench: one row per master with its
 * member count, a selection checkbox, and the canonical attributes the
 * service reported. Values render verbatim.
 */
export function renderMasterList(masters: Master[], selection: ReadonlySet<string>): string {
  if (masters.length === 0) {
    return '<div class="empty-state">No entities of this type yet</div>';
  }
  const rows = masters
    .map((master) => {
      const id = escapeHtml(master.id);
      const checked = selection.has(master.id) ? " checked" : "";
      const attrs = Object.entries(master.attributes ?? {})
        .map(([role, value]) => `<span class="attr"><b>${escapeHtml(role)}</b> ${escapeHtml(value)}</span>`)
        .join(" ");
      // unmatch per member is the undo affordance for a merge; pulling the
      // last member out of a singleton is rejected server-side, so no button
      const members = master.members
        .map((local) => {
          const lid = escapeHtml(local);
          const undo =
            master.members.length > 1
              ? ` <button class="unmatch" data-local="${lid}" title="pull this occurrence out">unmatch</button>`
              : "";
          return `<span class="member">${lid}${undo}</span>`;
        })
        .join(" ");
      return (
        `<tr data-master="${id}">` +
        `<td><input type="checkbox" class="select-master" data-id="${id}"${checked}></td>` +
        `<td class="master-id">${id}</td>` +
        `<td class="member-count">${master.members.length}</td>` +
        `<td class="members">${members}</td>` +
        `<td>${attrs}</td></tr>`
      );
    })
    .join("");
  return (
    '<table class="master-list"><thead><tr><th></th><th>master</th><th>count</th><th>members</th><th>attributes</th></tr></thead>' +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderProvenanceSummary(trail: ProvenanceTrail): string {
  const anchors = trail.anchors
    .map(
      (a) =>
        `<li>${escapeHtml(a.record_id)} / ${escapeHtml(a.table)} row ${a.row} ` +
        `(${a.columns.map(escapeHtml).join(", ")})</li>`,
    )
    .join("");
  return (
    `<p class="prov-kind">${escapeHtml(trail.iri)} (${escapeHtml(trail.kind)})</p>` +
    `<ul class="prov-anchors">${anchors}</ul>`
  );
}
