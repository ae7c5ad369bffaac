/**
 * Session state transitions for the what-if loop. All functions are pure:
 * they take a session and return a new one, so the UI layer stays a thin
 * binding and the loop is testable without a DOM.
 */

import type { ApiClient } from "./api";
import type {
  DatasetSchema,
  Engine,
  ExplorerSession,
  FieldError,
  GenerateResponse,
  RequestPayload,
} from "./types";
import { columnNames, kindOf } from "./types";

export function newSession(
  modelId: string,
  schema: DatasetSchema,
  schemaHash: string,
  instance?: Record<string, string>,
): ExplorerSession {
  const values: Record<string, string> = {};
  const mutable: Record<string, boolean> = {};
  for (const [name, kind] of schema.columns) {
    mutable[name] = true;
    if (instance && name in instance) {
      values[name] = String(instance[name]);
    } else {
      values[name] = kind === "categorical" ? schema.categories[name][0] : "0";
    }
  }
  return {
    modelId,
    schema,
    schemaHash,
    instance: values,
    mutable,
    desiredClass: schema.target_classes[schema.target_classes.length - 1],
    engine: "generate",
    nCandidates: 5,
    lastResponse: null,
    history: [],
    pending: false,
  };
}

export function setValue(session: ExplorerSession, column: string, raw: string): ExplorerSession {
  if (!(column in session.mutable)) throw new Error(`unknown column ${column}`);
  return { ...session, instance: { ...session.instance, [column]: raw } };
}

export function toggleMutable(session: ExplorerSession, column: string): ExplorerSession {
  if (!(column in session.mutable)) throw new Error(`unknown column ${column}`);
  return {
    ...session,
    mutable: { ...session.mutable, [column]: !session.mutable[column] },
  };
}

export function setDesiredClass(session: ExplorerSession, desired: string): ExplorerSession {
  if (!session.schema.target_classes.includes(desired)) {
    throw new Error(`unknown target class ${desired}`);
  }
  return { ...session, desiredClass: desired };
}

export function setEngine(session: ExplorerSession, engine: Engine): ExplorerSession {
  return { ...session, engine };
}

/** Client-side validation mirroring the server's 422 checks. */
export function validateInstance(session: ExplorerSession): FieldError[] {
  const errors: FieldError[] = [];
  for (const [name, kind] of session.schema.columns) {
    const raw = session.instance[name];
    if (raw === undefined || raw === "") {
      errors.push({ field: name, error: "missing value" });
      continue;
    }
    if (kind === "continuous") {
      if (!Number.isFinite(Number(raw))) {
        errors.push({ field: name, error: "not numeric" });
      }
    } else if (!session.schema.categories[name].includes(raw)) {
      errors.push({ field: name, error: `unknown category ${raw}` });
    }
  }
  return errors;
}

/** The template sent to the server; only schema columns can ever appear. */
export function buildTemplate(session: ExplorerSession): {
  mutable: string[];
  desired_class: string;
} {
  const mutable = columnNames(session.schema).filter((c) => session.mutable[c]);
  return { mutable, desired_class: session.desiredClass };
}

export function buildPayload(session: ExplorerSession, seed?: number): RequestPayload {
  const instance: Record<string, number | string> = {};
  for (const [name, kind] of session.schema.columns) {
    instance[name] =
      kind === "continuous" ? Number(session.instance[name]) : session.instance[name];
  }
  return {
    instance,
    template: buildTemplate(session),
    n: session.nCandidates,
    ...(seed !== undefined ? { seed } : {}),
    schema_hash: session.schemaHash,
  };
}

export function applyResponse(
  session: ExplorerSession,
  response: GenerateResponse,
): ExplorerSession {
  return {
    ...session,
    pending: false,
    lastResponse: response,
    history: [
      ...session.history,
      {
        instance: { ...session.instance },
        mutable: { ...session.mutable },
        desiredClass: session.desiredClass,
        engine: session.engine,
        response,
      },
    ],
  };
}

/** Restore toggles, values and desired class from a history entry exactly. */
export function restoreHistory(session: ExplorerSession, index: number): ExplorerSession {
  const entry = session.history[index];
  if (!entry) throw new Error(`no history entry ${index}`);
  return {
    ...session,
    instance: { ...entry.instance },
    mutable: { ...entry.mutable },
    desiredClass: entry.desiredClass,
    engine: entry.engine,
    lastResponse: entry.response,
  };
}

/**
 * Run one generate (or optimize) round trip and fold the response into the
 * session. On failure the session state is preserved apart from `pending`,
 * so the user can retry.
 */
export async function requestAndApply(
  session: ExplorerSession,
  api: ApiClient,
  seed?: number,
): Promise<ExplorerSession> {
  const errors = validateInstance(session);
  if (errors.length) {
    throw Object.assign(new Error("instance is invalid"), { fieldErrors: errors });
  }
  if (session.pending) throw new Error("a request is already in flight");
  const payload = buildPayload(session, seed);
  const call = session.engine === "optimize" ? api.optimize : api.generate;
  const response = await call.call(api, session.modelId, payload);
  return applyResponse(session, response);
}

/** Continuous values compare numerically, categories as strings. */
export function valuesDiffer(
  schema: DatasetSchema,
  column: string,
  original: string,
  candidate: number | string,
): boolean {
  if (kindOf(schema, column) === "continuous") {
    return Number(original) !== Number(candidate);
  }
  return String(original) !== String(candidate);
}
