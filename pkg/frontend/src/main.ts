// DOM wiring for the console page. All rendering goes through the pure
// functions in render.ts and every displayed value originates from a
// service response recorded in the session.

import { ApiClient, ApiError } from "./api.js";
import {
  renderAnswerCard,
  renderErrorCard,
  renderNodePanel,
  renderNotFound,
  renderStructuredCard,
} from "./render.js";
import { ConsoleSession } from "./session.js";
import type { StructuredQueryBody } from "./types.js";

const api = new ApiClient("");
const session = new ConsoleSession();

const queryForm = document.getElementById("query-form") as HTMLFormElement;
const questionInput = document.getElementById("question") as HTMLInputElement;
const askButton = document.getElementById("ask") as HTMLButtonElement;
const modeSelect = document.getElementById("mode") as HTMLSelectElement;
const structuredFields = document.getElementById("structured-fields") as HTMLElement;
const kindSelect = document.getElementById("kind") as HTMLSelectElement;
const relationSelect = document.getElementById("relation") as HTMLSelectElement;
const attributeSelect = document.getElementById("attribute") as HTMLSelectElement;
const cardLog = document.getElementById("cards") as HTMLElement;
const panelHost = document.getElementById("panel") as HTMLElement;
const statsLine = document.getElementById("stats-line") as HTMLElement;

let pending = false;

function refreshControls(): void {
  const structured = modeSelect.value === "structured";
  structuredFields.hidden = !structured;
  const kind = kindSelect.value;
  relationSelect.parentElement!.hidden = structured && kind === "c1" ? true : !structured;
  attributeSelect.parentElement!.hidden = structured && kind === "c2" ? true : !structured;
  askButton.disabled = pending || questionInput.value.trim() === "";
}

function appendCard(html: string): void {
  const wrapper = document.createElement("div");
  wrapper.innerHTML = html;
  cardLog.prepend(...wrapper.children);
}

async function browse(nodeId: string, offset = 0): Promise<void> {
  try {
    const node = await api.node(nodeId);
    const page = await api.neighbors(nodeId, 100, offset);
    session.recordBrowse(
      nodeId,
      page.neighbors.map((entry) => entry.node_id),
    );
    session.focus(nodeId);
    panelHost.innerHTML = renderNodePanel(node, page);
  } catch (error) {
    if (error instanceof ApiError && error.status === 404) {
      panelHost.innerHTML = renderNotFound(nodeId, error.message);
      return;
    }
    panelHost.innerHTML = renderNotFound(nodeId, String(error));
  }
}

async function askNatural(question: string): Promise<void> {
  pending = true;
  refreshControls();
  try {
    const payload = await api.ask(question);
    session.append(question, payload.answer, payload.anchor ? [payload.anchor] : []);
    appendCard(renderAnswerCard(payload));
  } catch (error) {
    const message = error instanceof ApiError ? error.message : String(error);
    appendCard(renderErrorCard(question, message));
  } finally {
    pending = false;
    refreshControls();
  }
}

async function askStructured(): Promise<void> {
  const body: StructuredQueryBody = { object_title: questionInput.value.trim() };
  const kind = kindSelect.value;
  if (kind !== "c1") body.relationship = relationSelect.value;
  if (kind !== "c2") body.target_attribute = attributeSelect.value;
  const label = JSON.stringify(body);
  pending = true;
  refreshControls();
  try {
    const result = await api.structuredQuery(body);
    session.append(
      label,
      result.values.join("; "),
      result.provenance.map(([nodeId]) => nodeId),
    );
    appendCard(renderStructuredCard(label, result));
  } catch (error) {
    const message = error instanceof ApiError ? error.message : String(error);
    appendCard(renderErrorCard(label, message));
  } finally {
    pending = false;
    refreshControls();
  }
}

queryForm.addEventListener("submit", (event) => {
  event.preventDefault();
  if (pending || questionInput.value.trim() === "") return;
  if (modeSelect.value === "structured") {
    void askStructured();
  } else {
    void askNatural(questionInput.value.trim());
  }
});

questionInput.addEventListener("input", refreshControls);
modeSelect.addEventListener("change", refreshControls);
kindSelect.addEventListener("change", refreshControls);

document.addEventListener("click", (event) => {
  const target = event.target;
  if (!(target instanceof HTMLElement)) return;
  const nodeId = target.dataset.nodeId;
  if (nodeId && (target.classList.contains("chip") || target.classList.contains("neighbor"))) {
    void browse(nodeId);
    return;
  }
  if (nodeId && (target.classList.contains("page-next") || target.classList.contains("page-prev"))) {
    void browse(nodeId, Number(target.dataset.offset ?? "0"));
    return;
  }
  if (target.classList.contains("use") && target.dataset.title) {
    questionInput.value = target.dataset.title;
    refreshControls();
    questionInput.focus();
    return;
  }
  if (target.classList.contains("retry") && target.dataset.retryQuestion) {
    if (!pending) void askNatural(target.dataset.retryQuestion);
  }
});

async function init(): Promise<void> {
  refreshControls();
  try {
    const stats = await api.stats();
    statsLine.textContent = `${stats.nodes} nodes · ${stats.edges} edges`;
    for (const relation of stats.relations) {
      const option = document.createElement("option");
      option.value = relation;
      const count = stats.edges_by_relation[relation] ?? 0;
      option.textContent = `${relation} (${count})`;
      relationSelect.append(option);
    }
    for (const key of stats.schema) {
      if (key === "name") continue;
      const option = document.createElement("option");
      option.value = key;
      option.textContent = key;
      attributeSelect.append(option);
    }
  } catch (error) {
    statsLine.textContent = `service unreachable: ${String(error)}`;
  }
}

void init();
