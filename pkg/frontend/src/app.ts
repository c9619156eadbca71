// Browser shell. Wires the DOM to the state modules; all data shown here
// comes straight from service responses, and every mutation is a service
// call followed by a reload of whatever it touched.

import { ApiError, Client } from "./api.js";
import { renderBarChart } from "./chart.js";
import { Workbench } from "./curation.js";
import { drillToTranscript, renderDrillError, renderTranscript } from "./provenance.js";
import {
  FilterClause,
  FilterOp,
  QueryBuildError,
  buildQueryDoc,
  emptyState,
  isLiteralRange,
  propertiesOf,
} from "./querybuilder.js";
import { escapeHtml, renderMasterList, renderPlainTable, renderProvenanceSummary } from "./render.js";
import type { GroupedResult, Job, OntologyDoc, WorkspaceConfig } from "./types.js";
import { isGrouped } from "./types.js";

const client = new Client("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

// --- navigation -------------------------------------------------------------

function activatePanel(name: string): void {
  for (const tab of document.querySelectorAll<HTMLButtonElement>(".nav-tab")) {
    tab.classList.toggle("active", tab.dataset.panel === name);
  }
  for (const panel of document.querySelectorAll<HTMLElement>(".panel")) {
    panel.classList.toggle("active", panel.id === `panel-${name}`);
  }
}

// --- query tab ----------------------------------------------------------------

/** Property paths offered by the selects: one hop, plus two hops through entities. */
function pathOptions(ontology: OntologyDoc, className: string): string[][] {
  const paths: string[][] = [];
  for (const p of propertiesOf(ontology, className)) {
    paths.push([p.name]);
    if (!isLiteralRange(p.range)) {
      for (const q of propertiesOf(ontology, p.range)) paths.push([p.name, q.name]);
    }
  }
  return paths;
}

function setupQueryTab(config: WorkspaceConfig, ontology: OntologyDoc): void {
  const state = emptyState();
  const classSelect = el<HTMLSelectElement>("qb-class");
  const groupSelect = el<HTMLSelectElement>("qb-group");
  const vizSelect = el<HTMLSelectElement>("qb-viz");
  const filtersDiv = el<HTMLDivElement>("qb-filters");
  const errorDiv = el<HTMLDivElement>("query-error");
  const resultDiv = el<HTMLDivElement>("query-result");

  classSelect.innerHTML = ontology.classes
    .map((c) => `<option value="${escapeHtml(c.name)}">${escapeHtml(c.name)}</option>`)
    .join("");
  state.entityClass = classSelect.value;

  function refreshPathSelects(): void {
    const options = pathOptions(ontology, state.entityClass)
      .map((path) => {
        const joined = escapeHtml(path.join("."));
        return `<option value="${joined}">${joined}</option>`;
      })
      .join("");
    groupSelect.innerHTML = `<option value="">(none)</option>${options}`;
    renderFilters(options);
  }

  function renderFilters(options: string): void {
    filtersDiv.innerHTML = state.filters
      .map((clause, i) => {
        const valueInputs =
          clause.op === "range"
            ? `<input type="text" class="f-min" data-i="${i}" placeholder="min" value="${escapeHtml(clause.min ?? "")}">
               <input type="text" class="f-max" data-i="${i}" placeholder="max" value="${escapeHtml(clause.max ?? "")}">`
            : `<input type="text" class="f-value" data-i="${i}" placeholder="value" value="${escapeHtml(clause.value ?? "")}">`;
        return `<div class="filter-row">
          <select class="f-path" data-i="${i}">${options}</select>
          <select class="f-op" data-i="${i}">
            <option value="eq">=</option><option value="prefix">starts with</option><option value="range">between</option>
          </select>
          ${valueInputs}
          <button class="f-remove" data-i="${i}">×</button>
        </div>`;
      })
      .join("");
    state.filters.forEach((clause, i) => {
      const pathSel = filtersDiv.querySelector<HTMLSelectElement>(`.f-path[data-i="${i}"]`)!;
      pathSel.value = clause.path.join(".");
      filtersDiv.querySelector<HTMLSelectElement>(`.f-op[data-i="${i}"]`)!.value = clause.op;
    });
  }

  classSelect.addEventListener("change", () => {
    state.entityClass = classSelect.value;
    state.filters = [];
    state.groupBy = null;
    refreshPathSelects();
  });

  groupSelect.addEventListener("change", () => {
    state.groupBy = groupSelect.value === "" ? null : groupSelect.value.split(".");
  });

  vizSelect.addEventListener("change", () => {
    state.visualization = vizSelect.value as "table" | "bar";
  });

  el<HTMLButtonElement>("qb-add-filter").addEventListener("click", () => {
    const first = pathOptions(ontology, state.entityClass)[0];
    if (!first) return;
    state.filters.push({ path: first, op: "eq", value: "" });
    refreshPathSelects();
  });

  filtersDiv.addEventListener("change", (event) => {
    const target = event.target as HTMLElement;
    const index = Number(target.dataset.i);
    const clause: FilterClause | undefined = state.filters[index];
    if (!clause) return;
    if (target.classList.contains("f-path")) clause.path = (target as HTMLSelectElement).value.split(".");
    else if (target.classList.contains("f-op")) {
      clause.op = (target as HTMLSelectElement).value as FilterOp;
      refreshPathSelects();
    } else if (target.classList.contains("f-value")) clause.value = (target as HTMLInputElement).value;
    else if (target.classList.contains("f-min")) clause.min = (target as HTMLInputElement).value;
    else if (target.classList.contains("f-max")) clause.max = (target as HTMLInputElement).value;
  });

  filtersDiv.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.classList.contains("f-remove")) {
      state.filters.splice(Number(target.dataset.i), 1);
      refreshPathSelects();
    }
  });

  function showError(message: string): void {
    errorDiv.textContent = message;
    errorDiv.hidden = false;
  }

  function renderGroupedTable(result: GroupedResult): string {
    if (result.rows.length === 0) return '<div class="empty-state">No results</div>';
    const rows = result.rows
      .map((row) => {
        const label = row.group === "Unknown" ? "<i>Unknown</i>" : escapeHtml(JSON.stringify(row.group));
        return `<tr><td>${label}</td><td>${row.count}</td></tr>`;
      })
      .join("");
    return (
      `<table class="result-table"><thead><tr><th>group</th><th>count</th></tr></thead><tbody>${rows}</tbody></table>` +
      `<p class="result-count">total ${result.total}</p>`
    );
  }

  async function run(): Promise<void> {
    errorDiv.hidden = true;
    try {
      const doc = buildQueryDoc(state, config.ontology_namespace, ontology);
      const result = await client.query(doc);
      if (isGrouped(result)) {
        resultDiv.innerHTML = state.visualization === "bar" ? renderBarChart(result) : renderGroupedTable(result);
      } else {
        resultDiv.innerHTML = renderPlainTable(result);
      }
    } catch (error) {
      if (error instanceof QueryBuildError) showError(error.message);
      else if (error instanceof ApiError) showError(`${error.code}: ${error.message}`);
      else throw error;
    }
  }

  el<HTMLButtonElement>("qb-run").addEventListener("click", () => void run());

  el<HTMLButtonElement>("qb-csv").addEventListener("click", () => {
    void (async () => {
      errorDiv.hidden = true;
      try {
        const doc = buildQueryDoc(state, config.ontology_namespace, ontology);
        // download exactly the CSV the service rendered
        const csv = await client.queryCsv(doc);
        const url = URL.createObjectURL(new Blob([csv], { type: "text/csv" }));
        const link = document.createElement("a");
        link.href = url;
        link.download = "query.csv";
        link.click();
        URL.revokeObjectURL(url);
      } catch (error) {
        if (error instanceof QueryBuildError) showError(error.message);
        else if (error instanceof ApiError) showError(`${error.code}: ${error.message}`);
        else throw error;
      }
    })();
  });

  // result rows link IRIs into the provenance drill
  resultDiv.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-iri]");
    if (!target || !target.dataset.iri) return;
    event.preventDefault();
    el<HTMLInputElement>("prov-iri").value = target.dataset.iri;
    activatePanel("provenance");
    void drill(target.dataset.iri);
  });

  refreshPathSelects();
}

// --- curation tab ---------------------------------------------------------------

function setupCurationTab(config: WorkspaceConfig): void {
  const tabsDiv = el<HTMLDivElement>("entity-tabs");
  const listDiv = el<HTMLDivElement>("cur-list");
  const errorDiv = el<HTMLDivElement>("cur-error");
  const mergeDiv = el<HTMLDivElement>("cur-merge");
  const matchButton = el<HTMLButtonElement>("cur-match");
  const pageInfo = el<HTMLSpanElement>("cur-pageinfo");

  const first = config.entity_types[0] ?? "";
  const workbench = new Workbench(client, first);

  tabsDiv.innerHTML = config.entity_types
    .map((t) => `<button data-etype="${escapeHtml(t)}">${escapeHtml(t)}</button>`)
    .join("");

  function paint(): void {
    for (const tab of tabsDiv.querySelectorAll<HTMLButtonElement>("button")) {
      tab.classList.toggle("active", tab.dataset.etype === workbench.entityType);
    }
    listDiv.innerHTML = renderMasterList(workbench.visible(), workbench.selection);
    matchButton.disabled = !workbench.canMatch;
    pageInfo.textContent = `page ${workbench.page + 1} / ${Math.max(1, workbench.pageCount)}, ${workbench.masters.length} masters`;
    if (workbench.error) {
      errorDiv.innerHTML = `<code>${escapeHtml(workbench.error.code)}</code> ${escapeHtml(workbench.error.message)}`;
      errorDiv.hidden = false;
    } else {
      errorDiv.hidden = true;
    }
    if (workbench.lastMerge) {
      const merge = workbench.lastMerge;
      mergeDiv.innerHTML =
        `Merged ${merge.merged.map(escapeHtml).join(", ")} into <b>${escapeHtml(merge.survivor)}</b>. ` +
        "Use a member's unmatch button to undo.";
      mergeDiv.hidden = false;
    } else {
      mergeDiv.hidden = true;
    }
  }

  tabsDiv.addEventListener("click", (event) => {
    const etype = (event.target as HTMLElement).dataset.etype;
    if (!etype) return;
    void workbench.load(etype).then(paint);
  });

  listDiv.addEventListener("change", (event) => {
    const target = event.target as HTMLInputElement;
    if (target.classList.contains("select-master") && target.dataset.id) {
      workbench.toggle(target.dataset.id);
      paint();
    }
  });

  listDiv.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.classList.contains("unmatch") && target.dataset.local) {
      void workbench.unmatchLocal(target.dataset.local).then(paint);
    }
  });

  matchButton.addEventListener("click", () => {
    void workbench.matchSelection().then(paint);
  });

  el<HTMLButtonElement>("cur-prev").addEventListener("click", () => {
    workbench.prevPage();
    paint();
  });
  el<HTMLButtonElement>("cur-next").addEventListener("click", () => {
    workbench.nextPage();
    paint();
  });

  void workbench.load().then(paint);
}

// --- provenance tab ----------------------------------------------------------------

async function drill(iri: string): Promise<void> {
  const errorDiv = el<HTMLDivElement>("prov-error");
  const resultDiv = el<HTMLDivElement>("prov-result");
  errorDiv.hidden = true;
  resultDiv.innerHTML = "";
  try {
    const { trail, views } = await drillToTranscript(client, iri);
    resultDiv.innerHTML = renderProvenanceSummary(trail) + views.map(renderTranscript).join("");
  } catch (error) {
    if (error instanceof ApiError) {
      errorDiv.innerHTML = renderDrillError(error);
      errorDiv.hidden = false;
      return;
    }
    throw error;
  }
}

function setupProvenanceTab(): void {
  el<HTMLButtonElement>("prov-go").addEventListener("click", () => {
    const iri = el<HTMLInputElement>("prov-iri").value.trim();
    if (iri) void drill(iri);
  });
}

// --- jobs tab -------------------------------------------------------------------------

const POLL_MS = 500;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function pollJob(job: Job, statusDiv: HTMLElement): Promise<void> {
  let current = job;
  const line = document.createElement("div");
  line.className = "job-line";
  statusDiv.prepend(line);
  for (;;) {
    line.textContent = `${current.id} ${current.kind}: ${current.state}`;
    if (current.state === "done") {
      line.textContent += `: ${JSON.stringify(current.report)}`;
      return;
    }
    if (current.state === "failed") {
      line.textContent += `, ${current.error?.code ?? "error"}: ${current.error?.message ?? ""}`;
      return;
    }
    await sleep(POLL_MS);
    current = await client.job(current.id);
  }
}

function setupJobsTab(): void {
  const statusDiv = el<HTMLDivElement>("job-status");
  const submit = (body: { kind: string }) => {
    void (async () => {
      try {
        await pollJob(await client.submitJob(body), statusDiv);
      } catch (error) {
        const line = document.createElement("div");
        line.className = "job-line";
        line.textContent =
          error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
        statusDiv.prepend(line);
      }
    })();
  };
  el<HTMLButtonElement>("job-transform").addEventListener("click", () => submit({ kind: "transform" }));
  el<HTMLButtonElement>("job-automatch").addEventListener("click", () => submit({ kind: "auto-match" }));
}

// --- bootstrap ----------------------------------------------------------------------------

async function main(): Promise<void> {
  el<HTMLElement>("nav").addEventListener("click", (event) => {
    const panel = (event.target as HTMLElement).dataset.panel;
    if (panel) activatePanel(panel);
  });
  const [config, ontology] = await Promise.all([client.config(), client.ontology()]);
  setupQueryTab(config, ontology);
  setupCurationTab(config);
  setupProvenanceTab();
  setupJobsTab();
}

void main();
