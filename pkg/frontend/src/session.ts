// Append-only record of one tab's exchanges with the service, plus which
// node the user is currently inspecting. Focus is only ever granted to
// nodes the service itself surfaced: answer provenance or browsed nodes
// and their listed neighbors.

import type { SessionEntry } from "./types.js";

export class ConsoleSession {
  private readonly entries: SessionEntry[] = [];
  private readonly browsed = new Set<string>();
  private focusedId: string | null = null;
  private readonly now: () => number;

  constructor(now: () => number = Date.now) {
    this.now = now;
  }

  append(question: string, answer: string, provenance: string[]): SessionEntry {
    const entry: SessionEntry = {
      question,
      answer,
      provenance: [...provenance],
      timestamp: this.now(),
    };
    this.entries.push(entry);
    return entry;
  }

  log(): readonly SessionEntry[] {
    return this.entries;
  }

  questions(): string[] {
    return this.entries.map((entry) => entry.question);
  }

  /** Nodes reached through a browse response become focusable too. */
  recordBrowse(nodeId: string, neighborIds: string[] = []): void {
    this.browsed.add(nodeId);
    for (const id of neighborIds) this.browsed.add(id);
  }

  canFocus(nodeId: string): boolean {
    if (this.browsed.has(nodeId)) return true;
    return this.entries.some((entry) => entry.provenance.includes(nodeId));
  }

  focus(nodeId: string | null): void {
    if (nodeId !== null && !this.canFocus(nodeId)) {
      throw new Error(`node ${nodeId} was never returned by the service in this session`);
    }
    this.focusedId = nodeId;
  }

  focused(): string | null {
    return this.focusedId;
  }
}
