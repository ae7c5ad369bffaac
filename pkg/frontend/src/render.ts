/**
 * Pure render-state builders: the DOM layer binds these structures one-to-one,
 * so every visual invariant (highlights, chips, badges) is testable headlessly.
 *
 * Aggregate chips always display the server-reported numbers; nothing is
 * recomputed client-side.
 */

import type { ExplorerSession, GenerateResponse } from "./types";
import { columnNames } from "./types";
import { validateInstance, valuesDiffer } from "./session";

export interface EditorRow {
  column: string;
  kind: "continuous" | "categorical";
  value: string;
  /** dropdown options for categorical columns, null for numeric inputs */
  options: string[] | null;
  mutable: boolean;
  /** frozen features show a lock icon and a dimmed value */
  locked: boolean;
  error: string | null;
}

export interface EditorState {
  rows: EditorRow[];
  desiredClass: string;
  desiredOptions: string[];
  engine: string;
  canSubmit: boolean;
  pending: boolean;
}

export function renderInstanceEditor(session: ExplorerSession): EditorState {
  const errors = new Map(validateInstance(session).map((e) => [e.field, e.error]));
  const rows: EditorRow[] = session.schema.columns.map(([name, kind]) => ({
    column: name,
    kind,
    value: session.instance[name],
    options: kind === "categorical" ? [...session.schema.categories[name]] : null,
    mutable: session.mutable[name],
    locked: !session.mutable[name],
    error: errors.get(name) ?? null,
  }));
  return {
    rows,
    desiredClass: session.desiredClass,
    desiredOptions: [...session.schema.target_classes],
    engine: session.engine,
    canSubmit: errors.size === 0 && !session.pending,
    pending: session.pending,
  };
}

export interface DiffCell {
  value: string;
  changed: boolean;
  /** changed cells are highlighted; unchanged ones render dimmed */
  highlighted: boolean;
}

export interface DiffRow {
  column: string;
  original: string;
  frozen: boolean;
  cells: DiffCell[];
}

export interface CandidateBadge {
  index: number;
  valid: boolean | null;
  /** probability assigned to the desired class, when the server reports it */
  desiredProbability: number | null;
}

export interface ResultsView {
  rows: DiffRow[];
  badges: CandidateBadge[];
  validChip: string | null;
  diversityChips: { categorical: string | null; continuous: string | null };
  nCandidates: number;
}

function formatValue(v: number | string): string {
  if (typeof v === "number") {
    return Number.isInteger(v) ? String(v) : v.toFixed(4).replace(/0+$/, "").replace(/\.$/, "");
  }
  return String(v);
}

export function renderResults(
  session: ExplorerSession,
  response?: GenerateResponse | null,
): ResultsView | null {
  const res = response ?? session.lastResponse;
  if (!res) return null;
  const schema = session.schema;
  const desiredIdx = schema.target_classes.indexOf(session.desiredClass);

  const rows: DiffRow[] = columnNames(schema).map((column) => {
    const original = session.instance[column];
    const frozen = !session.mutable[column];
    const cells: DiffCell[] = res.candidates.map((cand) => {
      const value = cand.values[column];
      const changed = valuesDiffer(schema, column, original, value);
      return { value: formatValue(value), changed, highlighted: changed };
    });
    return { column, original, frozen, cells };
  });

  const badges: CandidateBadge[] = res.candidates.map((cand, index) => ({
    index,
    valid: cand.valid,
    desiredProbability:
      cand.probabilities && desiredIdx >= 0 ? cand.probabilities[desiredIdx] : null,
  }));

  const vf = res.metrics.valid_fraction;
  const pct = (x: number) => `${Math.round(x * 100)}%`;
  return {
    rows,
    badges,
    validChip: vf === null ? null : `${pct(vf)} valid`,
    diversityChips: {
      categorical:
        res.metrics.categorical_diversity === null
          ? null
          : `categorical diversity ${res.metrics.categorical_diversity.toFixed(2)}`,
      continuous:
        res.metrics.continuous_diversity === null
          ? null
          : `continuous diversity ${res.metrics.continuous_diversity.toFixed(2)}`,
    },
    nCandidates: res.candidates.length,
  };
}

/** CSV of the last batch for the export button. */
export function exportCsv(session: ExplorerSession): string {
  const res = session.lastResponse;
  if (!res) return "";
  const cols = columnNames(session.schema);
  const header = [...cols, "predicted_class", "valid"].join(",");
  const lines = res.candidates.map((cand) => {
    const cells = cols.map((c) => {
      const v = cand.values[c];
      const s = String(v);
      return s.includes(",") ? `"${s.replace(/"/g, '""')}"` : s;
    });
    cells.push(cand.predicted_class ?? "");
    cells.push(cand.valid === null ? "" : String(cand.valid));
    return cells.join(",");
  });
  return [header, ...lines].join("\n") + "\n";
}
