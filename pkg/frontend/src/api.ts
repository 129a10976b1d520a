// Typed client for the review-service JSON API. Every mutating method maps
// to exactly one documented endpoint.

import type {
  AnnotationItem,
  AnnotationsPayload,
  AssignmentsPage,
  CodesPage,
  CreateRunBody,
  EvaluationPayload,
  FeedbackBody,
  MappingPayload,
  ProgressPayload,
  RunDetail,
  RunSummary,
  StageBody,
  ThemeNode,
  ThemesPayload,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly stage?: string;
  readonly batchIndex?: number;

  constructor(status: number, code: string, message: string, stage?: string, batchIndex?: number) {
    super(message);
    this.status = status;
    this.code = code;
    this.stage = stage;
    this.batchIndex = batchIndex;
  }

  get unreachable(): boolean {
    return this.status === 0;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

interface ListOptions {
  round?: number;
  offset?: number;
  limit?: number;
  q?: string;
}

function query(params: Record<string, string | number | boolean | undefined>): string {
  const pairs = Object.entries(params).filter(([, value]) => value !== undefined && value !== "");
  if (pairs.length === 0) return "";
  const search = new URLSearchParams();
  for (const [key, value] of pairs) search.set(key, String(value));
  return `?${search.toString()}`;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, "UNREACHABLE", `review service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let code = "HTTP_ERROR";
      let message = `${response.status} ${response.statusText}`;
      let stage: string | undefined;
      let batchIndex: number | undefined;
      try {
        const body = (await response.json()) as {
          error?: { code?: string; message?: string; stage?: string; batch_index?: number };
        };
        if (body.error) {
          code = body.error.code ?? code;
          message = body.error.message ?? message;
          stage = body.error.stage;
          batchIndex = body.error.batch_index;
        }
      } catch {
        // non-JSON error body: keep the HTTP status text
      }
      throw new ApiError(response.status, code, message, stage, batchIndex);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  listRuns(): Promise<{ runs: RunSummary[] }> {
    return this.request("/api/runs");
  }

  createRun(body: CreateRunBody): Promise<RunSummary> {
    return this.post("/api/runs", body);
  }

  getRun(runId: string): Promise<RunDetail> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}`);
  }

  listCodes(runId: string, options: ListOptions & { includeText?: boolean } = {}): Promise<CodesPage> {
    return this.request(
      `/api/runs/${encodeURIComponent(runId)}/codes` +
        query({
          round: options.round,
          offset: options.offset,
          limit: options.limit,
          q: options.q,
          include_text: options.includeText,
        }),
    );
  }

  postFeedback(
    runId: string,
    body: FeedbackBody,
  ): Promise<{ round: number; rerun_started: boolean }> {
    return this.post(`/api/runs/${encodeURIComponent(runId)}/feedback`, body);
  }

  postAnnotations(runId: string, items: AnnotationItem[]): Promise<{ stored: number }> {
    return this.post(`/api/runs/${encodeURIComponent(runId)}/annotations`, { items });
  }

  getAnnotations(runId: string, round?: number): Promise<AnnotationsPayload> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}/annotations` + query({ round }));
  }

  getThemes(runId: string, round?: number): Promise<ThemesPayload> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}/themes` + query({ round }));
  }

  approveThemes(
    runId: string,
    body: { round?: number; themes?: ThemeNode[] } = {},
  ): Promise<{ round: number; approved: { themes: ThemeNode[] } }> {
    return this.post(`/api/runs/${encodeURIComponent(runId)}/themes/approve`, body);
  }

  startStage(
    runId: string,
    stage: "code" | "collate" | "merge" | "classify",
    body: StageBody = {},
  ): Promise<{ started: boolean; stage: string; round: number }> {
    return this.post(`/api/runs/${encodeURIComponent(runId)}/stages/${stage}`, body);
  }

  getProgress(runId: string, cursor: number, timeout: number): Promise<ProgressPayload> {
    return this.request(
      `/api/runs/${encodeURIComponent(runId)}/progress` + query({ cursor, timeout }),
    );
  }

  getAssignments(runId: string, options: ListOptions = {}): Promise<AssignmentsPage> {
    return this.request(
      `/api/runs/${encodeURIComponent(runId)}/assignments` +
        query({ round: options.round, offset: options.offset, limit: options.limit, q: options.q }),
    );
  }

  getEvaluation(runId: string, k: number, round?: number): Promise<EvaluationPayload> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}/evaluation` + query({ k, round }));
  }

  getMapping(runId: string, round?: number): Promise<MappingPayload> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}/mapping` + query({ round }));
  }
}
