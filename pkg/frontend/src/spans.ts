/**
 * Pure span bookkeeping for one cell: token-range selection, overlap
 * validation, and the fixed four-class palette. The server remains the
 * source of truth for token boundaries; this module never re-tokenizes.
 */

import type { LabelName, SpanJson } from "./types.js";

export const LABELS: LabelName[] = ["TAG", "EQ", "QUANT", "UoM"];

export const LABEL_COLORS: Record<LabelName, string> = {
  TAG: "#1565C0",
  EQ: "#2E7D32",
  QUANT: "#E65100",
  UoM: "#6A1B9A",
};

export const LABEL_BACKGROUNDS: Record<LabelName, string> = {
  TAG: "#BBDEFB",
  EQ: "#C8E6C9",
  QUANT: "#FFE0B2",
  UoM: "#D1C4E9",
};

/** Keyboard shortcut (1-4) per label, 0/Backspace clears. */
export const LABEL_SHORTCUTS: Record<string, LabelName> = {
  "1": "TAG",
  "2": "EQ",
  "3": "QUANT",
  "4": "UoM",
};

export function spanLength(span: SpanJson): number {
  return span.end - span.start;
}

export function spansOverlap(a: SpanJson, b: SpanJson): boolean {
  return a.start < b.end && b.start < a.end;
}

export function validateSpan(span: SpanJson, tokenCount: number): string | null {
  if (!Number.isInteger(span.start) || !Number.isInteger(span.end)) {
    return "span bounds must be integers";
  }
  if (span.start < 0 || span.end > tokenCount) {
    return `span [${span.start}, ${span.end}) is outside the ${tokenCount}-token cell`;
  }
  if (span.start >= span.end) {
    return "span must cover at least one token";
  }
  if (!LABELS.includes(span.label)) {
    return `unknown label ${span.label}`;
  }
  return null;
}

/**
 * Add a span to a cell's working set. Tokens already covered by another span
 * are released first (half-open ranges), so the result is always a valid
 * non-overlapping set sorted by start.
 */
export function addSpan(spans: SpanJson[], next: SpanJson, tokenCount: number): SpanJson[] {
  const problem = validateSpan(next, tokenCount);
  if (problem !== null) {
    throw new Error(problem);
  }
  const kept: SpanJson[] = [];
  for (const span of spans) {
    if (!spansOverlap(span, next)) {
      kept.push(span);
      continue;
    }
    // keep the non-overlapping fragments of the old span
    if (span.start < next.start) {
      kept.push({ start: span.start, end: next.start, label: span.label });
    }
    if (span.end > next.end) {
      kept.push({ start: next.end, end: span.end, label: span.label });
    }
  }
  kept.push({ ...next });
  kept.sort((a, b) => a.start - b.start);
  return mergeAdjacent(kept);
}

/** Clear every span touching [start, end): the "back to O" action. */
export function clearRange(spans: SpanJson[], start: number, end: number): SpanJson[] {
  const probe: SpanJson = { start, end, label: "TAG" };
  const kept: SpanJson[] = [];
  for (const span of spans) {
    if (!spansOverlap(span, probe)) {
      kept.push(span);
      continue;
    }
    if (span.start < start) {
      kept.push({ start: span.start, end: start, label: span.label });
    }
    if (span.end > end) {
      kept.push({ start: end, end: span.end, label: span.label });
    }
  }
  return kept.sort((a, b) => a.start - b.start);
}

function mergeAdjacent(sorted: SpanJson[]): SpanJson[] {
  const merged: SpanJson[] = [];
  for (const span of sorted) {
    const last = merged[merged.length - 1];
    if (last && last.end === span.start && last.label === span.label) {
      last.end = span.end;
    } else {
      merged.push({ ...span });
    }
  }
  return merged;
}

/** Per-token label lookup (null = O), for rendering. */
export function tokenLabels(spans: SpanJson[], tokenCount: number): Array<LabelName | null> {
  const labels: Array<LabelName | null> = new Array(tokenCount).fill(null);
  for (const span of spans) {
    for (let i = span.start; i < span.end && i < tokenCount; i++) {
      labels[i] = span.label;
    }
  }
  return labels;
}

/** Normalize a drag between two token indices into an inclusive range. */
export function dragRange(anchor: number, current: number): { start: number; end: number } {
  return {
    start: Math.min(anchor, current),
    end: Math.max(anchor, current) + 1,
  };
}
