/**
 * Minimal SVG learning-curve panel: micro-F1 vs cumulative labels and
 * tables-per-batch vs iteration. Hidden entirely when the session has no
 * test set (no F1 to plot).
 */

import type { CurveJson } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

interface Series {
  name: string;
  color: string;
  points: Array<{ x: number; y: number }>;
}

function polyline(doc: Document, series: Series, sx: (x: number) => number, sy: (y: number) => number): SVGElement {
  const el = doc.createElementNS(SVG_NS, "polyline");
  el.setAttribute("fill", "none");
  el.setAttribute("stroke", series.color);
  el.setAttribute("stroke-width", "2");
  el.setAttribute("data-series", series.name);
  el.setAttribute(
    "points",
    series.points.map((p) => `${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`).join(" "),
  );
  return el;
}

function chart(doc: Document, title: string, seriesList: Series[], width = 360, height = 220): SVGSVGElement {
  const pad = 34;
  const svg = doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));
  svg.setAttribute("class", "curve-chart");
  svg.setAttribute("data-title", title);

  const xs = seriesList.flatMap((s) => s.points.map((p) => p.x));
  const ys = seriesList.flatMap((s) => s.points.map((p) => p.y));
  if (xs.length === 0) return svg;
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs, xMin + 1);
  const yMin = 0;
  const yMax = Math.max(...ys, 0.001);

  const sx = (x: number): number => pad + ((x - xMin) / (xMax - xMin)) * (width - 2 * pad);
  const sy = (y: number): number => height - pad - ((y - yMin) / (yMax - yMin)) * (height - 2 * pad);

  const axis = doc.createElementNS(SVG_NS, "path");
  axis.setAttribute(
    "d",
    `M ${pad} ${pad} L ${pad} ${height - pad} L ${width - pad} ${height - pad}`,
  );
  axis.setAttribute("stroke", "#90a4ae");
  axis.setAttribute("fill", "none");
  svg.appendChild(axis);

  const label = doc.createElementNS(SVG_NS, "text");
  label.setAttribute("x", String(width / 2));
  label.setAttribute("y", "14");
  label.setAttribute("text-anchor", "middle");
  label.setAttribute("class", "chart-title");
  label.textContent = title;
  svg.appendChild(label);

  for (const series of seriesList) {
    if (series.points.length === 1) {
      // a 1-point curve still renders: draw the marker alone
      const p = series.points[0];
      if (p) {
        const dot = doc.createElementNS(SVG_NS, "circle");
        dot.setAttribute("cx", String(sx(p.x)));
        dot.setAttribute("cy", String(sy(p.y)));
        dot.setAttribute("r", "3.5");
        dot.setAttribute("fill", series.color);
        dot.setAttribute("data-series", series.name);
        svg.appendChild(dot);
      }
      continue;
    }
    svg.appendChild(polyline(doc, series, sx, sy));
    for (const p of series.points) {
      const dot = doc.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", String(sx(p.x)));
      dot.setAttribute("cy", String(sy(p.y)));
      dot.setAttribute("r", "2.5");
      dot.setAttribute("fill", series.color);
      svg.appendChild(dot);
    }
  }
  return svg;
}

const OVERLAY_COLORS = ["#1565C0", "#E65100", "#2E7D32", "#6A1B9A"];

/** Render (or hide) the curve panel for one or more sessions' curves. */
export function renderCurvePanel(curves: CurveJson[], doc: Document = document): HTMLElement {
  const panel = doc.createElement("div");
  panel.className = "curve-panel";

  const withF1 = curves
    .map((curve) => ({
      curve,
      points: curve.records
        .filter((r) => r.micro_f1 !== null)
        .map((r) => ({ x: r.cumulative_labels, y: r.micro_f1 as number })),
    }))
    .filter((entry) => entry.points.length > 0);

  if (withF1.length === 0) {
    panel.classList.add("hidden");
    return panel;
  }

  const f1Series: Series[] = withF1.map((entry, i) => ({
    name: entry.curve.acquisition,
    color: OVERLAY_COLORS[i % OVERLAY_COLORS.length] ?? "#1565C0",
    points: entry.points,
  }));
  panel.appendChild(chart(doc, "micro F1 vs labels", f1Series));

  const tableSeries: Series[] = curves.map((curve, i) => ({
    name: curve.acquisition,
    color: OVERLAY_COLORS[i % OVERLAY_COLORS.length] ?? "#1565C0",
    points: curve.records
      .filter((r) => r.iteration >= 1)
      .map((r) => ({ x: r.iteration, y: r.batch_tables })),
  }));
  if (tableSeries.some((s) => s.points.length > 0)) {
    panel.appendChild(chart(doc, "tables per batch vs iteration", tableSeries));
  }
  return panel;
}
