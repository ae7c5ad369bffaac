/**
 * Scripted explorer session against a live generation service:
 * load instance -> freeze 80% of features -> generate 5 -> unfreeze one
 * feature -> regenerate. Every render must agree with the server response and
 * no frozen cell may ever be highlighted.
 *
 * The service is spawned from the Python package with a cached model registry;
 * set FLEXCF_SERVICE_URL to reuse an already-running instance instead.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { fileURLToPath } from "node:url";
import path from "node:path";

import { ApiClient } from "../src/api";
import { renderInstanceEditor, renderResults } from "../src/render";
import { newSession, requestAndApply, restoreHistory, toggleMutable } from "../src/session";
import type { ExplorerSession } from "../src/types";
import { columnNames } from "../src/types";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const FRONTEND = path.resolve(HERE, "..");
const REPO = path.resolve(FRONTEND, "..");
const PORT = 8631;

let proc: ChildProcess | null = null;
let baseUrl = process.env.FLEXCF_SERVICE_URL ?? "";

async function waitForService(url: string, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const res = await fetch(`${url}/models`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error(`service at ${url} did not come up`);
    await new Promise((r) => setTimeout(r, 500));
  }
}

beforeAll(async () => {
  if (baseUrl) {
    await waitForService(baseUrl, 10_000);
    return;
  }
  const registry = path.join(FRONTEND, ".fixture", "registry");
  const build = spawnSync(
    "python3",
    [path.join(HERE, "fixtures", "make_registry.py"), registry],
    { cwd: REPO, stdio: "inherit", timeout: 280_000 },
  );
  if (build.status !== 0) throw new Error("failed to build fixture registry");
  proc = spawn(
    "python3",
    ["-m", "flexcf.cli", "serve", "--registry", registry, "--port", String(PORT)],
    { cwd: REPO, stdio: "ignore" },
  );
  baseUrl = `http://127.0.0.1:${PORT}`;
  await waitForService(baseUrl, 60_000);
}, 360_000);

afterAll(() => {
  proc?.kill();
});

/** Renders must mirror the last server response exactly. */
function assertRenderConsistent(session: ExplorerSession): void {
  const res = session.lastResponse!;
  const view = renderResults(session)!;
  expect(view.nCandidates).toBe(res.candidates.length);

  const vf = res.metrics.valid_fraction;
  if (vf === null) {
    expect(view.validChip).toBeNull();
  } else {
    expect(view.validChip).toBe(`${Math.round(vf * 100)}% valid`);
  }
  view.badges.forEach((badge, i) => {
    expect(badge.valid).toBe(res.candidates[i].valid);
  });
  // every rendered cell shows the candidate value for that column
  for (const row of view.rows) {
    row.cells.forEach((cell, i) => {
      const raw = res.candidates[i].values[row.column];
      expect(Number.isNaN(Number(cell.value)) ? cell.value : Number(cell.value)).toEqual(
        typeof raw === "number" ? Number(cell.value) : raw,
      );
    });
  }
  // immutability surfaced: frozen cells are never highlighted and the server
  // kept their values identical to the original instance
  for (const row of view.rows.filter((r) => r.frozen)) {
    expect(row.cells.some((c) => c.highlighted)).toBe(false);
    const kind = session.schema.columns.find(([n]) => n === row.column)![1];
    for (const cand of res.candidates) {
      const got = cand.values[row.column];
      if (kind === "continuous") {
        expect(Number(got)).toBe(Number(session.instance[row.column]));
      } else {
        expect(String(got)).toBe(session.instance[row.column]);
      }
    }
  }
}

describe("explorer loop against the live service", () => {
  it("freeze 80%, generate, unfreeze one, regenerate", async () => {
    const api = new ApiClient(baseUrl);
    const { models } = await api.listModels();
    const generator = models.find((m) => m.kind === "fcegan");
    expect(generator).toBeDefined();

    const { schema, schema_hash } = await api.getSchema(generator!.id);
    let session = newSession(generator!.id, schema, schema_hash, {
      age: "31",
      workclass: "Private",
      education: "HS-grad",
      marital_status: "Never-married",
      occupation: "Service",
      sex: "Female",
      capital_gain: "0",
      hours_per_week: "35",
    });

    // freeze 80% of the features
    const names = columnNames(schema);
    const toFreeze = names.slice(0, Math.round(0.8 * names.length));
    for (const column of toFreeze) session = toggleMutable(session, column);
    const editor = renderInstanceEditor(session);
    expect(editor.rows.filter((r) => r.locked)).toHaveLength(toFreeze.length);
    expect(editor.canSubmit).toBe(true);

    session = await requestAndApply(session, api, 1234);
    expect(session.lastResponse!.candidates).toHaveLength(5);
    assertRenderConsistent(session);
    expect(session.history).toHaveLength(1);

    // unfreeze one feature and explore again
    session = toggleMutable(session, toFreeze[0]);
    session = await requestAndApply(session, api, 1235);
    assertRenderConsistent(session);
    expect(session.history).toHaveLength(2);

    // the history panel restores the earlier template exactly
    const restored = restoreHistory(session, 0);
    expect(restored.mutable[toFreeze[0]]).toBe(false);
    assertRenderConsistent(restored);
  }, 120_000);

  it("server rejects unknown mutable columns with field errors", async () => {
    const api = new ApiClient(baseUrl);
    const { models } = await api.listModels();
    const generator = models.find((m) => m.kind === "fcegan")!;
    const { schema, schema_hash } = await api.getSchema(generator.id);
    const session = newSession(generator.id, schema, schema_hash);
    const payload = {
      instance: Object.fromEntries(
        schema.columns.map(([n, k]) => [
          n,
          k === "continuous" ? 1 : schema.categories[n][0],
        ]),
      ),
      template: { mutable: ["salary"], desired_class: schema.target_classes[1] },
      n: 1,
    };
    await expect(api.generate(session.modelId, payload)).rejects.toMatchObject({
      status: 422,
    });
  });
});
