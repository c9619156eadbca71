// Bar chart for grouped query results, rendered as an SVG string. Pure
// layout: every bar height is computed from counts the service returned,
// and the bars are checked to sum to the reported total before drawing.

import type { GroupedResult, GroupedRow, TermObj } from "./types.js";
import { escapeHtml } from "./render.js";

export interface Bar {
  label: string;
  count: number;
  unknown: boolean;
  iri: string | null;
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface ChartLayout {
  bars: Bar[];
  total: number;
  maxCount: number;
  width: number;
  height: number;
}

/** Short display label for a group value; IRIs show their last segment. */
export function groupLabel(group: TermObj | "Unknown"): string {
  if (group === "Unknown") return "Unknown";
  if ("iri" in group && typeof group.iri === "string") {
    const segments = group.iri.split("/");
    return segments[segments.length - 1] || group.iri;
  }
  const values = Object.values(group);
  return String(values[0] ?? "");
}

function groupIri(group: TermObj | "Unknown"): string | null {
  if (group !== "Unknown" && "iri" in group && typeof group.iri === "string") return group.iri;
  return null;
}

const MARGIN = { top: 16, right: 12, bottom: 48, left: 12 };

export function chartLayout(result: GroupedResult, width = 640, height = 320): ChartLayout {
  const sum = result.rows.reduce((acc, row) => acc + row.count, 0);
  if (sum !== result.total) {
    throw new Error(`chart invariant broken: bars sum to ${sum}, result total is ${result.total}`);
  }
  const plotWidth = width - MARGIN.left - MARGIN.right;
  const plotHeight = height - MARGIN.top - MARGIN.bottom;
  const maxCount = result.rows.reduce((acc, row) => Math.max(acc, row.count), 0);
  const n = result.rows.length;
  const step = n > 0 ? plotWidth / n : plotWidth;
  const barWidth = Math.max(4, step * 0.7);

  const bars = result.rows.map((row: GroupedRow, i: number) => {
    const h = maxCount > 0 ? (row.count / maxCount) * plotHeight : 0;
    return {
      label: groupLabel(row.group),
      count: row.count,
      unknown: row.group === "Unknown",
      iri: groupIri(row.group),
      x: MARGIN.left + i * step + (step - barWidth) / 2,
      y: MARGIN.top + plotHeight - h,
      width: barWidth,
      height: h,
    };
  });
  return { bars, total: result.total, maxCount, width, height };
}

/**
 * Render the grouped result as inline SVG. The Unknown bar, when the
 * service reports one, is always drawn (hatched, last position).
 */
export function renderBarChart(result: GroupedResult, width = 640, height = 320): string {
  const layout = chartLayout(result, width, height);
  if (layout.bars.length === 0) {
    return '<div class="empty-state">No results</div>';
  }
  const parts: string[] = [
    `<svg class="bar-chart" viewBox="0 0 ${layout.width} ${layout.height}" role="img" ` +
      `aria-label="grouped counts, total ${layout.total}">`,
    '<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">' +
      '<line x1="0" y1="0" x2="0" y2="6" stroke="currentColor" stroke-width="2"/></pattern></defs>',
  ];
  for (const bar of layout.bars) {
    const cls = bar.unknown ? "bar bar-unknown" : "bar";
    const fill = bar.unknown ? ' fill="url(#hatch)"' : "";
    parts.push(
      `<rect class="${cls}"${fill} x="${bar.x.toFixed(1)}" y="${bar.y.toFixed(1)}" ` +
        `width="${bar.width.toFixed(1)}" height="${bar.height.toFixed(1)}"` +
        (bar.iri ? ` data-iri="${escapeHtml(bar.iri)}"` : "") +
        `><title>${escapeHtml(bar.label)}: ${bar.count}</title></rect>`,
    );
    const cx = bar.x + bar.width / 2;
    parts.push(
      `<text class="bar-count" x="${cx.toFixed(1)}" y="${(bar.y - 4).toFixed(1)}" ` +
        `text-anchor="middle">${bar.count}</text>`,
    );
    parts.push(
      `<text class="bar-label" x="${cx.toFixed(1)}" y="${(layout.height - MARGIN.bottom + 16).toFixed(1)}" ` +
        `text-anchor="middle">${escapeHtml(bar.label)}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
