import { describe, expect, it } from "vitest";

import { renderCurvePanel } from "../src/curve.js";
import type { CurveJson, IterationRecordJson } from "../src/types.js";

function record(overrides: Partial<IterationRecordJson>): IterationRecordJson {
  return {
    iteration: 0,
    cumulative_labels: 100,
    micro_f1: 0.5,
    per_class_f1: {},
    batch_tables: 0,
    eligible_tables: 40,
    seconds: 1.0,
    ...overrides,
  };
}

function curve(records: IterationRecordJson[], acquisition = "mnlp"): CurveJson {
  return { session_id: "s", acquisition, records };
}

describe("renderCurvePanel", () => {
  it("renders a one-point curve as a marker", () => {
    const panel = renderCurvePanel([curve([record({})])]);
    expect(panel.classList.contains("hidden")).toBe(false);
    const chart = panel.querySelector('[data-title="micro F1 vs labels"]');
    expect(chart).not.toBeNull();
    expect(chart?.querySelectorAll("circle[data-series]")).toHaveLength(1);
  });

  it("draws a polyline once there are two points", () => {
    const records = [
      record({ iteration: 0, cumulative_labels: 100, micro_f1: 0.5 }),
      record({ iteration: 1, cumulative_labels: 150, micro_f1: 0.6, batch_tables: 7 }),
    ];
    const panel = renderCurvePanel([curve(records)]);
    const f1Chart = panel.querySelector('[data-title="micro F1 vs labels"]');
    expect(f1Chart?.querySelectorAll("polyline")).toHaveLength(1);
    const tablesChart = panel.querySelector('[data-title="tables per batch vs iteration"]');
    expect(tablesChart).not.toBeNull();
  });

  it("overlays multiple curves in distinct colors", () => {
    const a = curve([record({}), record({ iteration: 1, cumulative_labels: 150, micro_f1: 0.6 })], "mnlp");
    const b = curve([record({ micro_f1: 0.4 }), record({ iteration: 1, cumulative_labels: 150, micro_f1: 0.7 })], "badge");
    const panel = renderCurvePanel([a, b]);
    const lines = panel.querySelectorAll('[data-title="micro F1 vs labels"] polyline');
    expect(lines).toHaveLength(2);
    const colors = new Set([...lines].map((l) => l.getAttribute("stroke")));
    expect(colors.size).toBe(2);
  });

  it("hides the panel when no record carries F1", () => {
    const panel = renderCurvePanel([curve([record({ micro_f1: null })])]);
    expect(panel.classList.contains("hidden")).toBe(true);
    expect(panel.querySelectorAll("svg")).toHaveLength(0);
  });
});
