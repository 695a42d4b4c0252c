// Pure HTML-string renderers. Every value they print comes from a service
// payload handed in by the caller; keeping them side-effect free is what
// makes the no-fabrication and replay checks possible in tests.

import type {
  AnswerPayload,
  NeighborEntry,
  NeighborsPayload,
  NodePayload,
  StructuredResultPayload,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function chip(nodeId: string): string {
  const safe = escapeHtml(nodeId);
  return `<button type="button" class="chip" data-node-id="${safe}">${safe}</button>`;
}

function chips(nodeIds: string[]): string {
  const unique: string[] = [];
  for (const id of nodeIds) {
    if (!unique.includes(id)) unique.push(id);
  }
  if (unique.length === 0) return "";
  return `<div class="chips">${unique.map(chip).join("")}</div>`;
}

export function formatTimings(timings: Record<string, number>): string {
  return Object.entries(timings)
    .map(([stage, ms]) => `${stage.replace(/_ms$/, "")} ${ms.toFixed(1)} ms`)
    .join(" · ");
}

export function renderAnswerCard(payload: AnswerPayload): string {
  const provenance = payload.anchor === null ? [] : [payload.anchor];
  return [
    `<article class="card answer-card">`,
    `<p class="question">${escapeHtml(payload.question)}</p>`,
    `<p class="answer">${escapeHtml(payload.answer)}</p>`,
    chips(provenance),
    `<p class="timings">${escapeHtml(formatTimings(payload.timings))}</p>`,
    `</article>`,
  ]
    .filter((part) => part !== "")
    .join("\n");
}

export function renderStructuredCard(
  label: string,
  result: StructuredResultPayload,
): string {
  const values = result.values.length
    ? escapeHtml(result.values.join("; "))
    : "<em>no values</em>";
  const sources = result.provenance.map(([nodeId]) => nodeId);
  const details = result.provenance
    .map(([, detail]) => `<li>${escapeHtml(detail)}</li>`)
    .join("");
  return [
    `<article class="card answer-card">`,
    `<p class="question">${escapeHtml(label)} <span class="kind">${escapeHtml(result.kind)}</span></p>`,
    `<p class="answer">${values}</p>`,
    chips(sources),
    details ? `<ul class="provenance">${details}</ul>` : "",
    `</article>`,
  ]
    .filter((part) => part !== "")
    .join("\n");
}

export function renderErrorCard(question: string, message: string): string {
  const safeQuestion = escapeHtml(question);
  return [
    `<article class="card error-card">`,
    `<p class="question">${safeQuestion}</p>`,
    `<p class="error">${escapeHtml(message)}</p>`,
    `<button type="button" class="retry" data-retry-question="${safeQuestion}">retry</button>`,
    `</article>`,
  ].join("\n");
}

export function renderNotFound(nodeId: string, message: string): string {
  return [
    `<section class="panel not-found">`,
    `<h2>${escapeHtml(nodeId)}</h2>`,
    `<p class="error">${escapeHtml(message)}</p>`,
    `</section>`,
  ].join("\n");
}

function neighborItem(entry: NeighborEntry): string {
  const arrow = entry.direction === "out" ? "→" : "←";
  const safeId = escapeHtml(entry.node_id);
  const safeTitle = escapeHtml(entry.title);
  return (
    `<li>` +
    `<span class="direction">${arrow}</span> ` +
    `<button type="button" class="neighbor" data-node-id="${safeId}">${safeTitle}</button>` +
    `<button type="button" class="use" data-title="${safeTitle}">use in question</button>` +
    `</li>`
  );
}

export function renderNodePanel(node: NodePayload, page: NeighborsPayload): string {
  const rows = Object.entries(node.attrs)
    .map(([key, value]) => `<tr><th>${escapeHtml(key)}</th><td>${escapeHtml(value)}</td></tr>`)
    .join("");
  const attributes = rows
    ? `<table class="attrs">${rows}</table>`
    : `<p class="empty">no attributes</p>`;

  const groups = new Map<string, NeighborEntry[]>();
  for (const entry of page.neighbors) {
    const group = groups.get(entry.relation);
    if (group) {
      group.push(entry);
    } else {
      groups.set(entry.relation, [entry]);
    }
  }
  const relationSections = [...groups.entries()]
    .map(
      ([relation, entries]) =>
        `<section class="relation-group" data-relation="${escapeHtml(relation)}">` +
        `<h3>${escapeHtml(relation)}</h3>` +
        `<ul>${entries.map(neighborItem).join("")}</ul>` +
        `</section>`,
    )
    .join("\n");
  const relations = relationSections || `<p class="empty">no connected nodes</p>`;

  const safeId = escapeHtml(node.id);
  const shownTo = page.offset + page.neighbors.length;
  const controls: string[] = [];
  if (page.offset > 0) {
    const prev = Math.max(0, page.offset - page.limit);
    controls.push(
      `<button type="button" class="page-prev" data-node-id="${safeId}" data-offset="${prev}">previous</button>`,
    );
  }
  if (shownTo < page.total) {
    controls.push(
      `<button type="button" class="page-next" data-node-id="${safeId}" data-offset="${shownTo}">next</button>`,
    );
  }
  const paging =
    page.total > page.neighbors.length
      ? `<p class="paging">showing ${page.offset + 1}–${shownTo} of ${page.total}${controls.length ? " " + controls.join(" ") : ""}</p>`
      : "";

  return [
    `<section class="panel node-panel" data-node-id="${safeId}">`,
    `<h2>${escapeHtml(node.attrs.name ?? node.id)}</h2>`,
    `<p class="node-meta">${escapeHtml(node.type)} · ${safeId}</p>`,
    attributes,
    relations,
    paging,
    `</section>`,
  ]
    .filter((part) => part !== "")
    .join("\n");
}
