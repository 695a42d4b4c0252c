// Thin typed client over the service's seven endpoints. Nothing here
// invents data: every method returns the parsed response body as-is.

import type {
  AnswerPayload,
  ErrorBody,
  NeighborsPayload,
  NodePayload,
  SearchPayload,
  StatsPayload,
  StructuredQueryBody,
  StructuredResultPayload,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
  }
}

function isErrorBody(value: unknown): value is ErrorBody {
  if (typeof value !== "object" || value === null) return false;
  const error = (value as { error?: unknown }).error;
  return (
    typeof error === "object" &&
    error !== null &&
    typeof (error as { code?: unknown }).code === "string" &&
    typeof (error as { message?: unknown }).message === "string"
  );
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.base + path, init);
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    if (!response.ok) {
      if (isErrorBody(body)) {
        throw new ApiError(response.status, body.error.code, body.error.message);
      }
      throw new ApiError(response.status, "http_error", `HTTP ${response.status}`);
    }
    return body as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/health");
  }

  stats(): Promise<StatsPayload> {
    return this.request("/stats");
  }

  node(nodeId: string): Promise<NodePayload> {
    return this.request(`/nodes/${encodeURIComponent(nodeId)}`);
  }

  neighbors(nodeId: string, limit = 100, offset = 0): Promise<NeighborsPayload> {
    const params = new URLSearchParams({
      limit: String(limit),
      offset: String(offset),
    });
    return this.request(`/nodes/${encodeURIComponent(nodeId)}/neighbors?${params}`);
  }

  search(title: string): Promise<SearchPayload> {
    const params = new URLSearchParams({ title });
    return this.request(`/search?${params}`);
  }

  structuredQuery(body: StructuredQueryBody): Promise<StructuredResultPayload> {
    return this.request("/structured-query", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  ask(question: string): Promise<AnswerPayload> {
    return this.request("/query", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ question }),
    });
  }
}
