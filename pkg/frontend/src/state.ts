// View-model logic kept free of DOM concerns so it can be tested headlessly.
// Nothing here computes analytics; it only arranges data the service sent.

import type { AnnotationItem, CodeItem, VerdictValue } from "./types.js";

export interface PagerState {
  offset: number;
  limit: number;
  total: number;
}

export function pageOf(state: PagerState): number {
  return Math.floor(state.offset / state.limit) + 1;
}

export function pageCount(state: PagerState): number {
  return Math.max(1, Math.ceil(state.total / state.limit));
}

export function nextOffset(state: PagerState): number {
  const candidate = state.offset + state.limit;
  return candidate < state.total ? candidate : state.offset;
}

export function prevOffset(state: PagerState): number {
  return Math.max(0, state.offset - state.limit);
}

export function pageLabel(state: PagerState): string {
  if (state.total === 0) return "0 items";
  const from = state.offset + 1;
  const to = Math.min(state.offset + state.limit, state.total);
  return `${from}-${to} of ${state.total}`;
}

export interface JoinedCodeRow {
  id: string;
  left: CodeItem | null;
  right: CodeItem | null;
}

/** Align two rounds of codes by data point for the side-by-side table. */
export function joinRounds(left: CodeItem[], right: CodeItem[]): JoinedCodeRow[] {
  const byId = new Map<string, JoinedCodeRow>();
  for (const item of left) {
    byId.set(item.id, { id: item.id, left: item, right: null });
  }
  for (const item of right) {
    const row = byId.get(item.id);
    if (row) {
      row.right = item;
    } else {
      byId.set(item.id, { id: item.id, left: null, right: item });
    }
  }
  return [...byId.values()];
}

export const VERDICT_KEYS: Record<string, VerdictValue> = {
  "1": "not_how",
  "2": "not_what",
  "3": "ok",
};

export interface AnnotationProgress {
  done: number;
  total: number;
  finished: boolean;
}

/**
 * One keyboard-driven annotation pass over a list of codes.
 *
 * Verdicts accumulate in a pending batch that the caller drains to POST;
 * `blinded` tells the view to hide the round column until the pass ends,
 * so the annotator cannot tell which round produced a code.
 */
export class AnnotationSession {
  private index = 0;
  private pending: AnnotationItem[] = [];
  readonly items: CodeItem[];
  readonly blinded: boolean;
  readonly flushThreshold: number;

  constructor(items: CodeItem[], blinded = false, flushThreshold = 10) {
    this.items = [...items];
    this.blinded = blinded;
    this.flushThreshold = flushThreshold;
  }

  get current(): CodeItem | null {
    return this.index < this.items.length ? this.items[this.index] : null;
  }

  get progress(): AnnotationProgress {
    return {
      done: this.index,
      total: this.items.length,
      finished: this.index >= this.items.length,
    };
  }

  get roundsVisible(): boolean {
    return !this.blinded || this.progress.finished;
  }

  /** Record the verdict for the current code; returns false when done. */
  record(verdict: VerdictValue): boolean {
    const item = this.current;
    if (!item) return false;
    this.pending.push({ data_point_id: item.id, round: item.round, verdict });
    this.index += 1;
    return true;
  }

  /** Map a pressed key to a verdict and record it; unknown keys are ignored. */
  recordKey(key: string): boolean {
    const verdict = VERDICT_KEYS[key];
    if (!verdict) return false;
    return this.record(verdict);
  }

  get shouldFlush(): boolean {
    return (
      this.pending.length >= this.flushThreshold ||
      (this.progress.finished && this.pending.length > 0)
    );
  }

  /** Hand the pending batch to the caller for a single POST. */
  drain(): AnnotationItem[] {
    const batch = this.pending;
    this.pending = [];
    return batch;
  }

  get pendingCount(): number {
    return this.pending.length;
  }
}

/** Escape untrusted text for interpolation into view HTML. */
export function esc(value: string | number | null | undefined): string {
  if (value === null || value === undefined) return "";
  return String(value)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

/** Split a textarea into trimmed, non-empty lines. */
export function splitLines(value: string): string[] {
  return value
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}
