import { describe, expect, it } from "vitest";

import {
  applyResponse,
  buildPayload,
  buildTemplate,
  newSession,
  restoreHistory,
  setDesiredClass,
  setValue,
  toggleMutable,
  validateInstance,
} from "../src/session";
import type { DatasetSchema, GenerateResponse } from "../src/types";

const SCHEMA: DatasetSchema = {
  columns: [
    ["age", "continuous"],
    ["job", "categorical"],
    ["hours", "continuous"],
  ],
  categories: { job: ["clerk", "engineer", "manager"] },
  target: "income",
  target_classes: ["low", "high"],
};

function makeResponse(validFraction: number | null): GenerateResponse {
  return {
    schema_hash: "abc",
    candidates: [
      {
        values: { age: 40, job: "engineer", hours: 38 },
        predicted_class: "high",
        probabilities: [0.2, 0.8],
        valid: true,
      },
    ],
    metrics: {
      valid_fraction: validFraction,
      mean_counterfactual_prediction: 0.8,
      categories_changed: 0.5,
      mean_percentile_shift: 0.1,
      max_percentile_shift: 0.2,
      fakeness: null,
      fakeness_real_mean: null,
      fakeness_real_std: null,
      categorical_diversity: null,
      continuous_diversity: null,
      per_feature_divergence: {},
      n_candidates: 1,
      n_valid: 1,
    },
  };
}

describe("newSession", () => {
  it("defaults every column to mutable with schema-conforming values", () => {
    const s = newSession("m", SCHEMA, "abc");
    expect(Object.values(s.mutable).every(Boolean)).toBe(true);
    expect(s.instance.job).toBe("clerk");
    expect(s.desiredClass).toBe("high");
  });

  it("accepts a starting instance", () => {
    const s = newSession("m", SCHEMA, "abc", { age: "52", job: "manager", hours: "20" });
    expect(s.instance.age).toBe("52");
  });
});

describe("validation", () => {
  it("flags non-numeric continuous input", () => {
    let s = newSession("m", SCHEMA, "abc");
    s = setValue(s, "age", "forty");
    expect(validateInstance(s)).toEqual([{ field: "age", error: "not numeric" }]);
  });

  it("flags out-of-vocabulary categories", () => {
    let s = newSession("m", SCHEMA, "abc");
    s = setValue(s, "job", "astronaut");
    const errors = validateInstance(s);
    expect(errors).toHaveLength(1);
    expect(errors[0].field).toBe("job");
  });

  it("rejects unknown columns and classes outright", () => {
    const s = newSession("m", SCHEMA, "abc");
    expect(() => setValue(s, "salary", "1")).toThrow(/unknown column/);
    expect(() => toggleMutable(s, "salary")).toThrow(/unknown column/);
    expect(() => setDesiredClass(s, "medium")).toThrow(/unknown target class/);
  });
});

describe("template construction", () => {
  it("only schema columns can appear in the mutable set", () => {
    let s = newSession("m", SCHEMA, "abc");
    s = toggleMutable(s, "job");
    const template = buildTemplate(s);
    expect(template.mutable).toEqual(["age", "hours"]);
    const names = SCHEMA.columns.map(([n]) => n);
    expect(template.mutable.every((c) => names.includes(c))).toBe(true);
  });

  it("payload carries numbers for continuous columns and the schema hash", () => {
    let s = newSession("m", SCHEMA, "abc");
    s = setValue(s, "age", "41.5");
    const payload = buildPayload(s, 7);
    expect(payload.instance.age).toBe(41.5);
    expect(payload.instance.job).toBe("clerk");
    expect(payload.seed).toBe(7);
    expect(payload.schema_hash).toBe("abc");
  });
});

describe("history", () => {
  it("is append-only and restore repopulates toggles exactly", () => {
    let s = newSession("m", SCHEMA, "abc");
    s = toggleMutable(s, "age");
    s = setValue(s, "hours", "12");
    const firstMutable = { ...s.mutable };
    s = applyResponse(s, makeResponse(0.6));

    s = toggleMutable(s, "job");
    s = setValue(s, "hours", "35");
    s = setDesiredClass(s, "low");
    s = applyResponse(s, makeResponse(1.0));
    expect(s.history).toHaveLength(2);

    const restored = restoreHistory(s, 0);
    expect(restored.mutable).toEqual(firstMutable);
    expect(restored.instance.hours).toBe("12");
    expect(restored.desiredClass).toBe("high");
    // restoring never rewrites history
    expect(restored.history).toHaveLength(2);
  });
});
