// Result rendering: HTML strings built from the service response, in the
// service's ranking order.  No scores are computed or re-sorted here.

import type { QueryResponse } from "./types.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderHeadBadges(
  selected: number[] | null,
  roiScores: number[] | null,
): string {
  if (!selected || !roiScores) return "";
  const badges = roiScores
    .map((score, head) => {
      const on = selected.includes(head);
      return `<span class="head-badge${on ? " on" : ""}" data-head="${head}">` +
        `h${head} ${(score * 100).toFixed(1)}%</span>`;
    })
    .join("");
  return `<div class="head-badges">${badges}</div>`;
}

export function renderResultsGrid(
  response: QueryResponse,
  imageUrl: (id: string) => string,
): string {
  const cards = response.ranked
    .map(
      (item) => `
    <figure class="result-card" data-image-id="${escapeHtml(item.image_id)}" data-rank="${item.rank}">
      <img src="${imageUrl(item.image_id)}" alt="${escapeHtml(item.image_id)}" />
      <figcaption>
        <span class="rank">#${item.rank}</span>
        <span class="id">${escapeHtml(item.image_id)}</span>
        <span class="score">${item.score.toFixed(4)}</span>
      </figcaption>
    </figure>`,
    )
    .join("\n");
  const fallback = response.fallback
    ? `<p class="fallback-note">empty prompt: answered without head selection</p>`
    : "";
  return `
  <section class="results" data-mode="${response.mode}">
    ${renderHeadBadges(response.selected_heads, response.roi_scores)}
    ${fallback}
    <div class="results-grid">${cards}</div>
  </section>`;
}

export function renderError(code: string, message: string): string {
  return `<div class="error-badge" data-code="${escapeHtml(code)}">` +
    `${escapeHtml(code)}: ${escapeHtml(message)}</div>`;
}

/** Ranked ids in render order; used to assert grid order follows the service. */
export function extractGridOrder(html: string): string[] {
  const order: string[] = [];
  const pattern = /data-image-id="([^"]+)"/g;
  let match;
  while ((match = pattern.exec(html)) !== null) {
    order.push(match[1]);
  }
  return order;
}
