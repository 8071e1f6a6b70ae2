import { describe, expect, it } from "vitest";

import {
  LABELS,
  addSpan,
  clearRange,
  dragRange,
  spansOverlap,
  tokenLabels,
  validateSpan,
} from "../src/spans.js";
import type { SpanJson } from "../src/types.js";

describe("palette", () => {
  it("is exactly the four entity classes", () => {
    expect(LABELS).toEqual(["TAG", "EQ", "QUANT", "UoM"]);
  });
});

describe("validateSpan", () => {
  it("accepts an in-range span", () => {
    expect(validateSpan({ start: 0, end: 2, label: "TAG" }, 4)).toBeNull();
  });

  it("rejects out-of-range and empty spans", () => {
    expect(validateSpan({ start: 0, end: 5, label: "TAG" }, 4)).toMatch(/outside/);
    expect(validateSpan({ start: 2, end: 2, label: "TAG" }, 4)).toMatch(/at least one/);
    expect(validateSpan({ start: -1, end: 1, label: "TAG" }, 4)).toMatch(/outside/);
  });

  it("rejects unknown labels", () => {
    expect(
      validateSpan({ start: 0, end: 1, label: "PERSON" as SpanJson["label"] }, 4),
    ).toMatch(/unknown label/);
  });
});

describe("spansOverlap", () => {
  it("uses half-open semantics", () => {
    expect(spansOverlap({ start: 0, end: 2, label: "TAG" }, { start: 2, end: 3, label: "EQ" })).toBe(false);
    expect(spansOverlap({ start: 0, end: 2, label: "TAG" }, { start: 1, end: 3, label: "EQ" })).toBe(true);
  });
});

describe("addSpan", () => {
  it("adds into empty set", () => {
    expect(addSpan([], { start: 1, end: 3, label: "QUANT" }, 4)).toEqual([
      { start: 1, end: 3, label: "QUANT" },
    ]);
  });

  it("carves overlapped spans so the result never overlaps", () => {
    const base: SpanJson[] = [{ start: 0, end: 4, label: "TAG" }];
    const result = addSpan(base, { start: 1, end: 3, label: "UoM" }, 5);
    expect(result).toEqual([
      { start: 0, end: 1, label: "TAG" },
      { start: 1, end: 3, label: "UoM" },
      { start: 3, end: 4, label: "TAG" },
    ]);
  });

  it("merges adjacent same-label runs", () => {
    const base: SpanJson[] = [{ start: 0, end: 2, label: "EQ" }];
    const result = addSpan(base, { start: 2, end: 4, label: "EQ" }, 5);
    expect(result).toEqual([{ start: 0, end: 4, label: "EQ" }]);
  });

  it("throws on invalid spans and leaves the input untouched", () => {
    const base: SpanJson[] = [{ start: 0, end: 1, label: "TAG" }];
    expect(() => addSpan(base, { start: 0, end: 9, label: "TAG" }, 3)).toThrow(/outside/);
    expect(base).toEqual([{ start: 0, end: 1, label: "TAG" }]);
  });
});

describe("clearRange", () => {
  it("removes the covered tokens only", () => {
    const base: SpanJson[] = [{ start: 0, end: 4, label: "QUANT" }];
    expect(clearRange(base, 1, 3)).toEqual([
      { start: 0, end: 1, label: "QUANT" },
      { start: 3, end: 4, label: "QUANT" },
    ]);
  });

  it("clearing everything yields the empty set", () => {
    const base: SpanJson[] = [
      { start: 0, end: 1, label: "TAG" },
      { start: 2, end: 3, label: "EQ" },
    ];
    expect(clearRange(base, 0, 3)).toEqual([]);
  });
});

describe("tokenLabels", () => {
  it("maps spans onto per-token labels with null as O", () => {
    const spans: SpanJson[] = [
      { start: 0, end: 2, label: "QUANT" },
      { start: 3, end: 4, label: "UoM" },
    ];
    expect(tokenLabels(spans, 4)).toEqual(["QUANT", "QUANT", null, "UoM"]);
  });
});

describe("dragRange", () => {
  it("normalizes either drag direction to an inclusive range", () => {
    expect(dragRange(2, 5)).toEqual({ start: 2, end: 6 });
    expect(dragRange(5, 2)).toEqual({ start: 2, end: 6 });
    expect(dragRange(3, 3)).toEqual({ start: 3, end: 4 });
  });
});
