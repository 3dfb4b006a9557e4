/**
 * HTML builders. All pure string functions so they can be tested without a
 * DOM. Rows render in the order the service returned them; nothing here
 * sorts, filters or recomputes scores.
 */

import type { MomentRow, SearchResponse, Stage } from "./api.js";
import type { HistoryEntry } from "./state.js";

const ENTITIES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => ENTITIES[ch]);
}

export function renderRows(rows: MomentRow[]): string {
  if (rows.length === 0) {
    return '<p class="empty">no results</p>';
  }
  const items = rows.map(
    (row) =>
      '<li class="result">' +
      `<span class="rank">#${row.rank}</span>` +
      `<span class="video">${escapeHtml(row.video_id)}</span>` +
      `<span class="span">[${row.start_s.toFixed(1)}s - ${row.end_s.toFixed(1)}s]</span>` +
      `<span class="score">${row.score.toFixed(4)}</span>` +
      timelineBar(row) +
      "</li>",
  );
  return `<ol class="results">${items.join("")}</ol>`;
}

/**
 * Abstract horizontal bar marking where the moment sits inside its video.
 * Percentages are clamped so a moment that spills past the reported duration
 * still draws inside the track.
 */
export function timelineBar(row: MomentRow): string {
  const duration = row.video_duration_s > 0 ? row.video_duration_s : Math.max(row.end_s, 1);
  const left = clampPct((row.start_s / duration) * 100);
  const right = clampPct((row.end_s / duration) * 100);
  const width = Math.max(right - left, 0.5);
  const title = `${row.start_s.toFixed(1)}s to ${row.end_s.toFixed(1)}s of ${duration.toFixed(1)}s`;
  return (
    `<div class="timeline" title="${title}">` +
    `<div class="extent" style="left:${left.toFixed(2)}%;width:${width.toFixed(2)}%"></div>` +
    "</div>"
  );
}

function clampPct(value: number): number {
  return Math.min(Math.max(value, 0), 100);
}

/** Per-stage timing chips, in the order the service reported them. */
export function renderTimings(timings: Record<string, number>): string {
  const chips = Object.entries(timings).map(
    ([key, ms]) => `<span class="timing">${escapeHtml(key)}: ${ms.toFixed(1)}ms</span>`,
  );
  return `<div class="timings">${chips.join(" ")}</div>`;
}

export function renderPanel(stage: Stage, response: SearchResponse): string {
  return (
    `<section class="panel" data-stage="${stage}">` +
    `<h2>${stage}</h2>` +
    renderTimings(response.timings_ms) +
    renderRows(response.results) +
    "</section>"
  );
}

export function renderBanner(kind: "error" | "notice", text: string): string {
  return `<div class="banner ${kind}">${escapeHtml(text)}</div>`;
}

/** Newest first; purely a display choice, the log itself stays append-order. */
export function renderHistory(entries: HistoryEntry[]): string {
  if (entries.length === 0) {
    return "";
  }
  const items = entries
    .slice()
    .reverse()
    .map(
      (e) =>
        `<li class="${e.status}">` +
        `<span class="h-query">${escapeHtml(e.query)}</span>` +
        `<span class="h-meta">${e.stage} / k=${e.topKSegments} / ${e.status}` +
        `${e.status === "ok" ? ` (${escapeHtml(e.detail)})` : ""}</span>` +
        "</li>",
    );
  return `<h2>history</h2><ul class="history">${items.join("")}</ul>`;
}
