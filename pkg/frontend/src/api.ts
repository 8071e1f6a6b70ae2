/** Thin typed client for the annotation service HTTP API. */

import type {
  BatchPayloadJson,
  CellRefJson,
  CurveJson,
  IterationRecordJson,
  SessionSummaryJson,
  SpanJson,
} from "./types.js";

export class ApiError extends Error {
  status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(`${base}${path}`, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ServiceClient {
  base: string;

  constructor(base = "") {
    this.base = base.replace(/\/$/, "");
  }

  createSession(
    tables: unknown[],
    testTables: unknown[],
    config: Record<string, unknown>,
    oracle: "human" | "simulated" = "human",
  ): Promise<SessionSummaryJson> {
    return request(this.base, "/sessions", {
      method: "POST",
      body: JSON.stringify({ tables, test_tables: testTables, config, oracle }),
    });
  }

  getSession(sessionId: string): Promise<SessionSummaryJson> {
    return request(this.base, `/sessions/${sessionId}`);
  }

  openBatch(sessionId: string): Promise<BatchPayloadJson> {
    return request(this.base, `/sessions/${sessionId}/batch`);
  }

  submitLabels(sessionId: string, cell: CellRefJson, spans: SpanJson[]): Promise<{
    ok: boolean;
    pending_labeled: number;
    pending_batch_size: number;
  }> {
    const row = cell.row === "header" || cell.row === null ? "header" : cell.row;
    return request(
      this.base,
      `/sessions/${sessionId}/cells/${encodeURIComponent(cell.table_id)}/${row}/${cell.col}/labels`,
      { method: "POST", body: JSON.stringify({ spans }) },
    );
  }

  train(sessionId: string, force = false): Promise<{
    record: IterationRecordJson;
    status: string;
  }> {
    const suffix = force ? "?force=true" : "";
    return request(this.base, `/sessions/${sessionId}/train${suffix}`, { method: "POST" });
  }

  getCurve(sessionId: string): Promise<CurveJson> {
    return request(this.base, `/sessions/${sessionId}/curve`);
  }
}
