import type { NextResponse, ProgressResponse, SubmitResponse } from "./types.js";

export class ApiError extends Error {
  readonly status: number | null;

  constructor(message: string, status: number | null = null) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/**
 * Minimal JSON client for the annotation endpoints. The fetch function is
 * injectable so tests can stand in a fake server without touching the network.
 */
export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  nextTask(sessionId: string, annotatorId: string): Promise<NextResponse> {
    const query = new URLSearchParams({ annotator: annotatorId });
    return this.request(`/api/session/${encodeURIComponent(sessionId)}/next?${query}`);
  }

  submitLabel(
    sessionId: string,
    taskId: string,
    annotatorId: string,
    label: number,
  ): Promise<SubmitResponse> {
    return this.request(`/api/session/${encodeURIComponent(sessionId)}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ task_id: taskId, annotator_id: annotatorId, label }),
    });
  }

  progress(sessionId: string): Promise<ProgressResponse> {
    return this.request(`/api/session/${encodeURIComponent(sessionId)}/progress`);
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`cannot reach the server: ${String(err)}`);
    }
    if (!response.ok) {
      throw new ApiError(await describeFailure(response), response.status);
    }
    return (await response.json()) as T;
  }
}

async function describeFailure(response: Response): Promise<string> {
  let detail = "";
  try {
    const body: unknown = await response.json();
    if (body !== null && typeof body === "object" && "detail" in body) {
      const d = (body as { detail: unknown }).detail;
      if (typeof d === "string") detail = d;
    }
  } catch {
    // non-JSON error body, fall back to the status line
  }
  return detail === "" ? `server returned ${response.status}` : detail;
}
