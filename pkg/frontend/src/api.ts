/**
 * Typed client for the QA service.
 *
 * Endpoints consumed: POST /v1/query, POST /v1/match, GET /v1/chunks/{id},
 * GET /v1/health. The only configuration is the service base URL.
 */

export interface SegmentPayload {
  start: number;
  end: number;
  chunk_ids: string[];
  score: number;
  referenced: boolean;
}

export interface AlignmentPayload {
  qid: string;
  mode: string;
  threshold: number;
  segments: SegmentPayload[];
}

export type RankedEntry = [string, number];

export interface QueryResponse {
  qid: string;
  question: string;
  answer_sentences: string[];
  generator: string;
  alignment: AlignmentPayload;
  segments: SegmentPayload[];
  reranked: RankedEntry[];
  retrieved: RankedEntry[];
  chunk_bodies: Record<string, string>;
}

export interface ChunkResponse {
  id: string;
  source: string;
  split: string;
  header: Record<string, string> | null;
  ver0: string;
  ver1: string;
}

export interface HealthResponse {
  status: string;
  corpus_size: number;
  scorer: { retrieval: string; rerank: string };
  generator: string;
  defaults: {
    n: number;
    k: number;
    threshold: number;
    tie_epsilon: number;
    mode: string;
    version: string;
  };
}

export interface MatchRequest {
  sentences: string[];
  chunk_ids: string[];
  threshold: number;
  tie_epsilon?: number;
  mode?: string;
}

export class ServiceError extends Error {
  public readonly status: number;
  public readonly code: string;

  public constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

async function parseError(response: Response): Promise<ServiceError> {
  let code = "unknown";
  let message = `service returned status ${response.status}`;
  try {
    const body = (await response.json()) as { error?: { code?: string; message?: string } };
    if (body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the generic message
  }
  return new ServiceError(response.status, code, message);
}

export class ApiClient {
  public readonly baseUrl: string;

  public constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async post<T>(path: string, payload: unknown, signal?: AbortSignal): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
      signal,
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  private async get<T>(path: string, signal?: AbortSignal): Promise<T> {
    const response = await fetch(this.baseUrl + path, { signal });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  public query(question: string, signal?: AbortSignal): Promise<QueryResponse> {
    return this.post<QueryResponse>("/v1/query", { question }, signal);
  }

  public match(request: MatchRequest, signal?: AbortSignal): Promise<AlignmentPayload> {
    return this.post<AlignmentPayload>("/v1/match", request, signal);
  }

  public chunk(chunkId: string, signal?: AbortSignal): Promise<ChunkResponse> {
    return this.get<ChunkResponse>(`/v1/chunks/${encodeURIComponent(chunkId)}`, signal);
  }

  public health(signal?: AbortSignal): Promise<HealthResponse> {
    return this.get<HealthResponse>("/v1/health", signal);
  }
}
