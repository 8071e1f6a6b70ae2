/**
 * Renders one batch item: the complete table grid with the candidate cell
 * outlined, and token-level drag selection inside it. Suggested spans (model
 * output) render dashed; annotator spans render solid.
 */

import { LABELS, LABEL_BACKGROUNDS, LABEL_COLORS, dragRange, tokenLabels } from "./spans.js";
import type { BatchItemJson, LabelName, SpanJson } from "./types.js";

export interface TableViewCallbacks {
  /** A contiguous token range was selected; label choice happens elsewhere. */
  onSelect(range: { start: number; end: number } | null): void;
}

export interface TableViewHandle {
  root: HTMLElement;
  /** Re-render the candidate cell with the current working spans. */
  setSpans(spans: SpanJson[], suggested: boolean): void;
  selection(): { start: number; end: number } | null;
  clearSelection(): void;
}

function isCandidate(item: BatchItemJson, rowIdx: number | "header", colIdx: number): boolean {
  const row = item.cell.row === null ? "header" : item.cell.row;
  return row === rowIdx && item.cell.col === colIdx;
}

export function renderBatchItem(
  item: BatchItemJson,
  callbacks: TableViewCallbacks,
  doc: Document = document,
): TableViewHandle {
  const root = doc.createElement("div");
  root.className = "table-view";

  const table = doc.createElement("table");
  table.className = "grid";
  const grid: Array<[number | "header", string[][]]> = [
    ["header", item.table.header],
  ];
  item.table.rows.forEach((row, i) => grid.push([i, row]));

  let candidateCell: HTMLTableCellElement | null = null;

  for (const [rowIdx, cells] of grid) {
    const tr = doc.createElement("tr");
    if (rowIdx === "header") tr.className = "header-row";
    for (let colIdx = 0; colIdx < cells.length; colIdx++) {
      const td = doc.createElement(rowIdx === "header" ? "th" : "td");
      td.setAttribute("data-row", String(rowIdx));
      td.setAttribute("data-col", String(colIdx));
      const tokens = cells[colIdx] ?? [];
      if (isCandidate(item, rowIdx, colIdx)) {
        td.classList.add("candidate");
        candidateCell = td as HTMLTableCellElement;
        renderTokens(td, item.tokens, doc);
      } else {
        td.textContent = tokens.join(" ");
      }
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  root.appendChild(table);

  // --- selection state ------------------------------------------------
  let anchor: number | null = null;
  let current: number | null = null;
  let dragging = false;

  function selection(): { start: number; end: number } | null {
    if (anchor === null || current === null) return null;
    return dragRange(anchor, current);
  }

  function paintSelection(): void {
    const range = selection();
    const spans = root.querySelectorAll<HTMLElement>(".token");
    spans.forEach((el) => {
      const idx = Number.parseInt(el.getAttribute("data-index") ?? "-1", 10);
      const selected = range !== null && idx >= range.start && idx < range.end;
      el.classList.toggle("selecting", selected);
    });
  }

  function clearSelection(): void {
    anchor = null;
    current = null;
    dragging = false;
    paintSelection();
  }

  if (candidateCell) {
    candidateCell.addEventListener("mousedown", (e) => {
      const el = (e.target as HTMLElement).closest<HTMLElement>(".token");
      if (!el) return;
      e.preventDefault();
      const idx = Number.parseInt(el.getAttribute("data-index") ?? "0", 10);
      if (e.shiftKey && anchor !== null) {
        current = idx;
      } else {
        anchor = idx;
        current = idx;
      }
      dragging = true;
      paintSelection();
      callbacks.onSelect(selection());
    });
    candidateCell.addEventListener("mouseover", (e) => {
      if (!dragging) return;
      const el = (e.target as HTMLElement).closest<HTMLElement>(".token");
      if (!el) return;
      current = Number.parseInt(el.getAttribute("data-index") ?? "0", 10);
      paintSelection();
      callbacks.onSelect(selection());
    });
    doc.addEventListener("mouseup", () => {
      dragging = false;
    });
  }

  function setSpans(spans: SpanJson[], suggested: boolean): void {
    const labels = tokenLabels(spans, item.tokens.length);
    const tokens = root.querySelectorAll<HTMLElement>(".token");
    tokens.forEach((el) => {
      const idx = Number.parseInt(el.getAttribute("data-index") ?? "-1", 10);
      const label = labels[idx] ?? null;
      el.classList.toggle("suggested", suggested && label !== null);
      if (label === null) {
        el.style.removeProperty("background-color");
        el.style.removeProperty("border-color");
        el.removeAttribute("data-label");
      } else {
        el.style.backgroundColor = LABEL_BACKGROUNDS[label];
        el.style.borderColor = LABEL_COLORS[label];
        el.setAttribute("data-label", label);
      }
    });
  }

  return { root, setSpans, selection, clearSelection };
}

function renderTokens(cell: HTMLElement, tokens: string[], doc: Document): void {
  for (let i = 0; i < tokens.length; i++) {
    const el = doc.createElement("span");
    el.className = "token";
    el.setAttribute("data-index", String(i));
    el.textContent = tokens[i] ?? "";
    cell.appendChild(el);
    if (i < tokens.length - 1) {
      cell.appendChild(doc.createTextNode(" "));
    }
  }
}

/** The label palette row: four classes plus the clear-to-O action. */
export function renderPalette(
  onLabel: (label: LabelName) => void,
  onClear: () => void,
  doc: Document = document,
): HTMLElement {
  const bar = doc.createElement("div");
  bar.className = "palette";
  LABELS.forEach((label, i) => {
    const btn = doc.createElement("button");
    btn.className = "palette-button";
    btn.setAttribute("data-label", label);
    btn.style.backgroundColor = LABEL_BACKGROUNDS[label];
    btn.style.borderColor = LABEL_COLORS[label];
    btn.textContent = `${label} (${i + 1})`;
    btn.addEventListener("click", () => onLabel(label));
    bar.appendChild(btn);
  });
  const clear = doc.createElement("button");
  clear.className = "palette-button clear";
  clear.setAttribute("data-label", "O");
  clear.textContent = "O (0)";
  clear.addEventListener("click", () => onClear());
  bar.appendChild(clear);
  return bar;
}
