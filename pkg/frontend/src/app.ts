/**
 * Annotation workbench controller.
 *
 * All state is server-authoritative: the controller holds only the working
 * spans of the item currently on screen plus a cursor into the pending
 * batch; a reload rebuilds everything from GET /sessions/{id}.
 */

import { ApiError, ServiceClient } from "./api.js";
import { LABEL_SHORTCUTS, addSpan, clearRange } from "./spans.js";
import { renderCurvePanel } from "./curve.js";
import { renderBatchItem, renderPalette, type TableViewHandle } from "./table-view.js";
import type {
  BatchItemJson,
  BatchPayloadJson,
  LabelName,
  SessionSummaryJson,
  SpanJson,
} from "./types.js";

const POLL_MS = 1500;

export class AnnotationApp {
  client: ServiceClient;
  root: HTMLElement;
  doc: Document;

  sessionId: string | null = null;
  batch: BatchPayloadJson | null = null;
  cursor = 0;
  workingSpans: SpanJson[] = [];
  /** true until the annotator edits; suggestions are never submitted as-is */
  showingSuggestions = true;
  view: TableViewHandle | null = null;
  statusLine: HTMLElement;
  errorLine: HTMLElement;
  progressLine: HTMLElement;
  itemHost: HTMLElement;
  curveHost: HTMLElement;
  private keyHandler: (e: KeyboardEvent) => void;

  constructor(root: HTMLElement, client: ServiceClient, doc: Document = document) {
    this.root = root;
    this.client = client;
    this.doc = doc;

    this.statusLine = doc.createElement("div");
    this.statusLine.className = "status-line";
    this.errorLine = doc.createElement("div");
    this.errorLine.className = "error-line hidden";
    this.progressLine = doc.createElement("div");
    this.progressLine.className = "progress-line";
    this.itemHost = doc.createElement("div");
    this.itemHost.className = "item-host";
    this.curveHost = doc.createElement("div");
    this.curveHost.className = "curve-host";

    root.append(this.statusLine, this.errorLine, this.progressLine, this.itemHost, this.curveHost);

    this.keyHandler = (e: KeyboardEvent) => this.handleKey(e);
    doc.addEventListener("keydown", this.keyHandler);
  }

  dispose(): void {
    this.doc.removeEventListener("keydown", this.keyHandler);
  }

  // -- session lifecycle ------------------------------------------------

  async loadSession(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    const summary = await this.client.getSession(sessionId);
    this.applySummary(summary);
    await this.refreshCurve();
  }

  applySummary(summary: SessionSummaryJson): void {
    this.statusLine.textContent =
      `session ${summary.session_id.slice(0, 8)} · ${summary.status} · ` +
      `iteration ${summary.iteration} · ${summary.labeled_cells} labeled / ` +
      `${summary.unlabeled_cells} in pool`;
    if (summary.pending_batch) {
      this.batch = summary.pending_batch;
      this.cursor = this.firstUnlabeled();
      this.showItem();
    } else {
      this.batch = null;
      this.itemHost.innerHTML = "";
      this.renderIdleControls(summary);
    }
    this.renderProgress();
  }

  firstUnlabeled(): number {
    if (!this.batch) return 0;
    const idx = this.batch.items.findIndex((item) => !item.labeled);
    return idx === -1 ? 0 : idx;
  }

  async openNextBatch(): Promise<void> {
    if (!this.sessionId) return;
    try {
      this.batch = await this.client.openBatch(this.sessionId);
      this.cursor = 0;
      this.clearError();
      this.showItem();
      this.renderProgress();
    } catch (err) {
      this.showError(err);
    }
  }

  // -- item rendering ---------------------------------------------------

  currentItem(): BatchItemJson | null {
    if (!this.batch) return null;
    return this.batch.items[this.cursor] ?? null;
  }

  showItem(): void {
    const item = this.currentItem();
    this.itemHost.innerHTML = "";
    if (!item) return;

    this.workingSpans = item.suggested_spans.map((s) => ({ ...s }));
    this.showingSuggestions = item.suggested_spans.length > 0;

    this.view = renderBatchItem(item, { onSelect: () => undefined }, this.doc);
    this.itemHost.appendChild(this.view.root);
    this.view.setSpans(this.workingSpans, this.showingSuggestions);

    const palette = renderPalette(
      (label) => this.applyLabel(label),
      () => this.applyClear(),
      this.doc,
    );
    this.itemHost.appendChild(palette);

    const nav = this.doc.createElement("div");
    nav.className = "item-nav";
    const skip = this.doc.createElement("button");
    skip.className = "nav-skip";
    skip.textContent = "skip";
    skip.addEventListener("click", () => this.advance());
    const submit = this.doc.createElement("button");
    submit.className = "nav-submit";
    submit.textContent = "submit & next (Enter)";
    submit.addEventListener("click", () => void this.submitCurrent());
    nav.append(skip, submit);
    this.itemHost.appendChild(nav);
    this.renderProgress();
  }

  renderProgress(): void {
    if (!this.batch) {
      this.progressLine.textContent = "";
      return;
    }
    const done = this.batch.items.filter((item) => item.labeled).length;
    const kind = this.batch.is_seed ? "seed" : this.batch.kind;
    this.progressLine.textContent =
      `${kind} batch · ${done}/${this.batch.size} labeled · ` +
      `item ${this.cursor + 1}/${this.batch.size}`;
  }

  renderIdleControls(summary: SessionSummaryJson): void {
    const controls = this.doc.createElement("div");
    controls.className = "idle-controls";
    if (summary.status === "idle" && summary.unlabeled_cells > 0) {
      const next = this.doc.createElement("button");
      next.className = "open-batch";
      next.textContent = "request next batch";
      next.addEventListener("click", () => void this.openNextBatch());
      controls.appendChild(next);
    }
    this.itemHost.appendChild(controls);
  }

  // -- labeling actions -------------------------------------------------

  applyLabel(label: LabelName): void {
    const item = this.currentItem();
    const range = this.view?.selection() ?? null;
    if (!item || !range) return;
    try {
      if (this.showingSuggestions) {
        // first edit replaces the suggestion wholesale with annotator intent
        this.workingSpans = this.workingSpans.map((s) => ({ ...s }));
        this.showingSuggestions = false;
      }
      this.workingSpans = addSpan(
        this.workingSpans,
        { start: range.start, end: range.end, label },
        item.tokens.length,
      );
      this.clearError();
    } catch (err) {
      this.showError(err);
      return;
    }
    this.view?.setSpans(this.workingSpans, false);
    this.view?.clearSelection();
  }

  applyClear(): void {
    const range = this.view?.selection() ?? null;
    if (!range) return;
    this.showingSuggestions = false;
    this.workingSpans = clearRange(this.workingSpans, range.start, range.end);
    this.view?.setSpans(this.workingSpans, false);
    this.view?.clearSelection();
  }

  handleKey(e: KeyboardEvent): void {
    if (!this.batch) return;
    const label = LABEL_SHORTCUTS[e.key];
    if (label) {
      this.applyLabel(label);
    } else if (e.key === "0" || e.key === "Backspace") {
      this.applyClear();
    } else if (e.key === "Enter") {
      void this.submitCurrent();
    } else if (e.key === "ArrowRight") {
      this.advance();
    } else if (e.key === "ArrowLeft") {
      this.cursor = Math.max(0, this.cursor - 1);
      this.showItem();
    }
  }

  advance(): void {
    if (!this.batch) return;
    this.cursor = Math.min(this.batch.items.length - 1, this.cursor + 1);
    this.showItem();
  }

  async submitCurrent(): Promise<void> {
    const item = this.currentItem();
    if (!item || !this.sessionId || !this.batch) return;
    const spans = this.workingSpans.map((s) => ({ ...s }));
    const wasLabeled = item.labeled;
    item.labeled = true; // optimistic: advance immediately
    const submittedCursor = this.cursor;
    this.advance();
    try {
      await this.client.submitLabels(this.sessionId, item.cell, spans);
      this.clearError();
      this.renderProgress();
      if (this.batch.items.every((it) => it.labeled)) {
        await this.trainAndRefresh();
      }
    } catch (err) {
      // rollback the optimistic advance
      item.labeled = wasLabeled;
      this.cursor = submittedCursor;
      this.showItem();
      this.showError(err);
    }
  }

  async trainAndRefresh(): Promise<void> {
    if (!this.sessionId) return;
    this.statusLine.textContent = "training…";
    try {
      await this.client.train(this.sessionId);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // another submission may still be in flight; poll until idle
        await this.pollUntilIdle();
      } else {
        this.showError(err);
        return;
      }
    }
    const summary = await this.client.getSession(this.sessionId);
    this.applySummary(summary);
    await this.refreshCurve();
  }

  async pollUntilIdle(): Promise<void> {
    if (!this.sessionId) return;
    for (;;) {
      const summary = await this.client.getSession(this.sessionId);
      if (summary.status !== "training") {
        return;
      }
      await new Promise((resolve) => setTimeout(resolve, POLL_MS));
    }
  }

  async refreshCurve(): Promise<void> {
    if (!this.sessionId) return;
    const curve = await this.client.getCurve(this.sessionId);
    this.curveHost.innerHTML = "";
    this.curveHost.appendChild(renderCurvePanel([curve], this.doc));
  }

  // -- feedback ---------------------------------------------------------

  showError(err: unknown): void {
    const message = err instanceof Error ? err.message : String(err);
    this.errorLine.textContent = message;
    this.errorLine.classList.remove("hidden");
  }

  clearError(): void {
    this.errorLine.textContent = "";
    this.errorLine.classList.add("hidden");
  }
}

/** Entry point used by index.html. */
export function bootstrap(doc: Document = document): AnnotationApp {
  const root = doc.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const app = new AnnotationApp(root, new ServiceClient(""), doc);
  const params = new URLSearchParams(doc.defaultView?.location.search ?? "");
  const sessionId = params.get("session");
  if (sessionId) {
    void app.loadSession(sessionId);
  } else {
    app.statusLine.textContent = "open with ?session=<id> to load a session";
  }
  return app;
}
