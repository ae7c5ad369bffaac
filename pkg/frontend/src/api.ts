/**
 * Thin fetch client for the generation service. All explorer traffic goes
 * through these four calls; there is no other backend.
 */

import type {
  DatasetSchema,
  FieldError,
  GenerateResponse,
  ModelInfo,
  RequestPayload,
} from "./types";

export class ApiError extends Error {
  status: number;
  fieldErrors: FieldError[];

  constructor(status: number, message: string, fieldErrors: FieldError[] = []) {
    super(message);
    this.status = status;
    this.fieldErrors = fieldErrors;
  }
}

export interface SchemaResponse {
  schema: DatasetSchema;
  schema_hash: string;
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail = (body as { detail?: unknown }).detail;
      const fieldErrors = Array.isArray(detail) ? (detail as FieldError[]) : [];
      const message =
        typeof detail === "string" ? detail : `request failed with status ${response.status}`;
      throw new ApiError(response.status, message, fieldErrors);
    }
    return body as T;
  }

  listModels(): Promise<{ models: ModelInfo[] }> {
    return this.request("/models");
  }

  getSchema(modelId: string): Promise<SchemaResponse> {
    return this.request(`/models/${encodeURIComponent(modelId)}/schema`);
  }

  generate(modelId: string, payload: RequestPayload): Promise<GenerateResponse> {
    return this.request(`/models/${encodeURIComponent(modelId)}/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  optimize(modelId: string, payload: RequestPayload): Promise<GenerateResponse> {
    return this.request(`/models/${encodeURIComponent(modelId)}/optimize`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }
}
