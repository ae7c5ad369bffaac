/**
 * DOM bindings: translate render-state into elements and wire user events
 * back into session transitions. Kept free of business logic.
 */

import { ApiClient, ApiError } from "./api";
import { exportCsv, renderInstanceEditor, renderResults } from "./render";
import {
  newSession,
  requestAndApply,
  restoreHistory,
  setDesiredClass,
  setEngine,
  setValue,
  toggleMutable,
} from "./session";
import type { ExplorerSession } from "./types";

interface AppState {
  session: ExplorerSession | null;
  api: ApiClient;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function mountExplorer(root: HTMLElement, api: ApiClient): void {
  const state: AppState = { session: null, api };

  const modelSelect = el("select", "model-select");
  const editorHost = el("div", "editor");
  const resultsHost = el("div", "results");
  const historyHost = el("div", "history");
  const status = el("div", "status");

  root.append(
    el("h1", undefined, "Counterfactual explorer"),
    labeled("Model", modelSelect),
    status,
    editorHost,
    resultsHost,
    labeledBlock("History", historyHost),
  );

  modelSelect.addEventListener("change", () => {
    void loadModel(modelSelect.value);
  });

  async function loadModel(modelId: string): Promise<void> {
    const { schema, schema_hash } = await api.getSchema(modelId);
    state.session = newSession(modelId, schema, schema_hash);
    redraw();
  }

  async function boot(): Promise<void> {
    const { models } = await api.listModels();
    const generators = models.filter((m) => m.kind === "fcegan");
    if (!generators.length) {
      status.textContent = "no generator models registered";
      return;
    }
    for (const m of generators) {
      const opt = el("option", undefined, m.id);
      opt.value = m.id;
      modelSelect.append(opt);
    }
    await loadModel(generators[0].id);
  }

  function redraw(): void {
    if (!state.session) return;
    drawEditor();
    drawResults();
    drawHistory();
  }

  function drawEditor(): void {
    const session = state.session!;
    const editor = renderInstanceEditor(session);
    editorHost.replaceChildren();
    const table = el("table", "editor-table");
    for (const row of editor.rows) {
      const tr = el("tr", row.locked ? "locked" : undefined);
      tr.append(el("td", "col-name", row.column + (row.locked ? " \u{1F512}" : "")));

      const valueTd = el("td");
      if (row.options) {
        const select = el("select");
        for (const option of row.options) {
          const opt = el("option", undefined, option);
          opt.value = option;
          select.append(opt);
        }
        select.value = row.value;
        select.disabled = row.locked;
        select.addEventListener("change", () => {
          state.session = setValue(state.session!, row.column, select.value);
          redraw();
        });
        valueTd.append(select);
      } else {
        const input = el("input");
        input.value = row.value;
        input.disabled = row.locked;
        input.addEventListener("change", () => {
          state.session = setValue(state.session!, row.column, input.value);
          redraw();
        });
        valueTd.append(input);
        if (row.error) valueTd.append(el("span", "field-error", row.error));
      }
      tr.append(valueTd);

      const toggleTd = el("td");
      const toggle = el("input");
      toggle.type = "checkbox";
      toggle.checked = row.mutable;
      toggle.title = "mutable";
      toggle.addEventListener("change", () => {
        state.session = toggleMutable(state.session!, row.column);
        redraw();
      });
      toggleTd.append(toggle);
      tr.append(toggleTd);
      table.append(tr);
    }
    editorHost.append(table);

    const desired = el("select", "desired-select");
    for (const cls of editor.desiredOptions) {
      const opt = el("option", undefined, cls);
      opt.value = cls;
      desired.append(opt);
    }
    desired.value = editor.desiredClass;
    desired.addEventListener("change", () => {
      state.session = setDesiredClass(state.session!, desired.value);
      redraw();
    });
    editorHost.append(labeled("Desired class", desired));

    const engine = el("select", "engine-select");
    for (const name of ["generate", "optimize"]) {
      const opt = el("option", undefined, name === "generate" ? "generator" : "gradient search");
      opt.value = name;
      engine.append(opt);
    }
    engine.value = editor.engine;
    engine.addEventListener("change", () => {
      state.session = setEngine(state.session!, engine.value as "generate" | "optimize");
    });
    editorHost.append(labeled("Engine", engine));

    const button = el("button", "generate-btn", editor.pending ? "working…" : "Explain");
    button.disabled = !editor.canSubmit;
    button.addEventListener("click", () => void submit());
    editorHost.append(button);
  }

  async function submit(): Promise<void> {
    const session = state.session!;
    state.session = { ...session, pending: true };
    drawEditor();
    try {
      state.session = await requestAndApply(state.session, state.api);
      status.textContent = "";
    } catch (err) {
      state.session = { ...state.session, pending: false };
      if (err instanceof ApiError && err.fieldErrors.length) {
        status.textContent = err.fieldErrors
          .map((e) => `${e.field}: ${e.error}`)
          .join("; ");
      } else {
        status.textContent = `request failed — ${String(err)} (state preserved, retry)`;
      }
    }
    redraw();
  }

  function drawResults(): void {
    const session = state.session!;
    resultsHost.replaceChildren();
    const view = renderResults(session);
    if (!view) return;

    const chips = el("div", "chips");
    if (view.validChip) chips.append(el("span", "chip chip-valid", view.validChip));
    for (const chip of [view.diversityChips.categorical, view.diversityChips.continuous]) {
      if (chip) chips.append(el("span", "chip", chip));
    }
    resultsHost.append(chips);

    const table = el("table", "diff-table");
    const head = el("tr");
    head.append(el("th", undefined, "feature"), el("th", undefined, "original"));
    for (const badge of view.badges) {
      const th = el("th");
      th.append(el("div", undefined, `#${badge.index + 1}`));
      const v = badge.valid;
      th.append(
        el("span", v ? "badge badge-valid" : "badge badge-invalid",
           v === null ? "unverified" : v ? "valid" : "invalid"),
      );
      if (badge.desiredProbability !== null) {
        th.append(el("div", "prob", badge.desiredProbability.toFixed(3)));
      }
      head.append(th);
    }
    table.append(head);
    for (const row of view.rows) {
      const tr = el("tr", row.frozen ? "frozen" : undefined);
      tr.append(el("td", "col-name", row.column), el("td", "original", row.original));
      for (const cell of row.cells) {
        tr.append(el("td", cell.highlighted ? "cell changed" : "cell dimmed", cell.value));
      }
      table.append(tr);
    }
    resultsHost.append(table);

    const exportBtn = el("button", "export-btn", "Download CSV");
    exportBtn.addEventListener("click", () => {
      const blob = new Blob([exportCsv(session)], { type: "text/csv" });
      const a = el("a");
      a.href = URL.createObjectURL(blob);
      a.download = "counterfactuals.csv";
      a.click();
      URL.revokeObjectURL(a.href);
    });
    resultsHost.append(exportBtn);
  }

  function drawHistory(): void {
    const session = state.session!;
    historyHost.replaceChildren();
    session.history.forEach((entry, i) => {
      const mutableCols = Object.entries(entry.mutable)
        .filter(([, m]) => m)
        .map(([c]) => c);
      const item = el("button", "history-item",
        `#${i + 1} ${entry.engine} → ${entry.desiredClass} ` +
        `(${mutableCols.length} mutable)`);
      item.addEventListener("click", () => {
        state.session = restoreHistory(state.session!, i);
        redraw();
      });
      historyHost.append(item);
    });
  }

  void boot().catch((err) => {
    status.textContent = `failed to reach service: ${String(err)}`;
  });
}

function labeled(label: string, control: HTMLElement): HTMLElement {
  const wrap = el("label", "labeled");
  wrap.append(el("span", "label-text", label + " "), control);
  return wrap;
}

function labeledBlock(label: string, block: HTMLElement): HTMLElement {
  const wrap = el("div", "labeled-block");
  wrap.append(el("h2", undefined, label), block);
  return wrap;
}
