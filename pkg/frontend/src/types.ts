/**
 * Wire types for the generation service plus the explorer's session state.
 */

export type ColumnKind = "continuous" | "categorical";

export interface DatasetSchema {
  /** [name, kind] pairs in fixed order; the target column is separate. */
  columns: [string, ColumnKind][];
  categories: Record<string, string[]>;
  target: string;
  target_classes: string[];
}

export interface ModelInfo {
  id: string;
  kind: string;
  schema_hash: string;
  created_at: string;
}

export interface Candidate {
  values: Record<string, number | string>;
  predicted_class: string | null;
  probabilities: number[] | null;
  valid: boolean | null;
}

export interface MetricsReport {
  valid_fraction: number | null;
  mean_counterfactual_prediction: number | null;
  categories_changed: number | null;
  mean_percentile_shift: number | null;
  max_percentile_shift: number | null;
  fakeness: number | null;
  fakeness_real_mean: number | null;
  fakeness_real_std: number | null;
  categorical_diversity: number | null;
  continuous_diversity: number | null;
  per_feature_divergence: Record<string, number | null>;
  n_candidates: number;
  n_valid: number | null;
}

export interface GenerateResponse {
  schema_hash: string;
  candidates: Candidate[];
  metrics: MetricsReport;
}

export type Engine = "generate" | "optimize";

export interface RequestPayload {
  instance: Record<string, number | string>;
  template: { mutable: string[]; desired_class: string };
  n: number;
  seed?: number;
  schema_hash?: string;
}

export interface HistoryEntry {
  instance: Record<string, string>;
  mutable: Record<string, boolean>;
  desiredClass: string;
  engine: Engine;
  response: GenerateResponse;
}

export interface ExplorerSession {
  modelId: string;
  schema: DatasetSchema;
  schemaHash: string;
  /** raw form values per feature column, always strings */
  instance: Record<string, string>;
  mutable: Record<string, boolean>;
  desiredClass: string;
  engine: Engine;
  nCandidates: number;
  lastResponse: GenerateResponse | null;
  /** append-only within a session */
  history: HistoryEntry[];
  pending: boolean;
}

export interface FieldError {
  field: string;
  error: string;
}

export function columnNames(schema: DatasetSchema): string[] {
  return schema.columns.map(([name]) => name);
}

export function kindOf(schema: DatasetSchema, column: string): ColumnKind {
  const found = schema.columns.find(([name]) => name === column);
  if (!found) throw new Error(`unknown column ${column}`);
  return found[1];
}
