/** JSON shapes exchanged with the annotation service. */

export type LabelName = "TAG" | "EQ" | "QUANT" | "UoM";

export interface SpanJson {
  start: number;
  end: number;
  label: LabelName;
}

export interface CellRefJson {
  table_id: string;
  row: number | "header";
  col: number;
}

export interface TableGridJson {
  table_id: string;
  header: string[][];
  rows: string[][][];
}

export interface BatchItemJson {
  cell: CellRefJson;
  score: number | null;
  tokens: string[];
  labeled: boolean;
  suggested_spans: SpanJson[];
  table: TableGridJson;
}

export interface BatchPayloadJson {
  session_id: string;
  iteration: number;
  kind: string;
  is_seed: boolean;
  size: number;
  items: BatchItemJson[];
}

export interface IterationRecordJson {
  iteration: number;
  cumulative_labels: number;
  micro_f1: number | null;
  per_class_f1: Record<string, number>;
  batch_tables: number;
  eligible_tables: number;
  seconds: number;
}

export interface CurveJson {
  session_id: string;
  acquisition: string;
  records: IterationRecordJson[];
}

export interface SessionSummaryJson {
  session_id: string;
  oracle: string;
  status: "idle" | "batch-open" | "training";
  iteration: number;
  labeled_cells: number;
  unlabeled_cells: number;
  pending_batch_size: number;
  pending_labeled: number;
  pending_is_seed: boolean;
  has_test_set: boolean;
  pending_batch?: BatchPayloadJson;
  curve?: CurveJson;
}
