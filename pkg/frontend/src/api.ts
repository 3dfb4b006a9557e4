/**
 * Typed client for the retrieval service. Every route lives under /api/v1;
 * the console never talks to anything else.
 */

export type Stage = "coarse" | "fine";

export interface MomentRow {
  video_id: string;
  start_s: number;
  end_s: number;
  score: number;
  rank: number;
  stage: Stage;
  video_duration_s: number;
}

export interface SearchResponse {
  results: MomentRow[];
  timings_ms: Record<string, number>;
  engine_version: string;
  index_kind: string;
}

export interface SearchRequest {
  query: string;
  stage: Stage;
  top_k_segments?: number;
}

export interface ServiceStats {
  num_videos: number;
  num_segments: number;
  index_kind: string;
  dim: number;
  segment_length_s: number;
  top_k_segments: number;
  engine_version: string;
}

/** The service answered with a non-2xx status (0 means it was unreachable). */
export class ServiceError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ServiceError";
  }
}

/** No response arrived before the client-side deadline. */
export class RequestTimeout extends Error {
  constructor(readonly timeoutMs: number) {
    super(`no response after ${timeoutMs / 1000}s`);
    this.name = "RequestTimeout";
  }
}

/** The caller abandoned the request (a newer submission superseded it). */
export class RequestCancelled extends Error {
  constructor() {
    super("request cancelled");
    this.name = "RequestCancelled";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface RequestOptions {
  fetchFn?: FetchLike;
  signal?: AbortSignal;
  timeoutMs?: number;
}

export const SEARCH_TIMEOUT_MS = 10_000;

// wrapped so the unbound global does not lose its `this` in browsers
const defaultFetch: FetchLike = (input, init) => fetch(input, init);

/**
 * POST one search. Rejects with ServiceError, RequestTimeout or
 * RequestCancelled; anything the service rejected carries its reason.
 */
export async function postSearch(
  req: SearchRequest,
  opts: RequestOptions = {},
): Promise<SearchResponse> {
  const fetchFn = opts.fetchFn ?? defaultFetch;
  const timeoutMs = opts.timeoutMs ?? SEARCH_TIMEOUT_MS;

  const controller = new AbortController();
  const timer = setTimeout(() => controller.abort("timeout"), timeoutMs);
  const onCancel = () => controller.abort("cancelled");
  if (opts.signal) {
    if (opts.signal.aborted) {
      clearTimeout(timer);
      throw new RequestCancelled();
    }
    opts.signal.addEventListener("abort", onCancel, { once: true });
  }

  let resp: Response;
  try {
    resp = await fetchFn("/api/v1/search", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
      signal: controller.signal,
    });
  } catch (err) {
    if (controller.signal.aborted) {
      if (controller.signal.reason === "cancelled") throw new RequestCancelled();
      throw new RequestTimeout(timeoutMs);
    }
    throw new ServiceError(0, `service unreachable: ${String(err)}`);
  } finally {
    clearTimeout(timer);
    opts.signal?.removeEventListener("abort", onCancel);
  }

  if (!resp.ok) {
    throw new ServiceError(resp.status, await errorReason(resp));
  }
  return (await resp.json()) as SearchResponse;
}

export async function fetchStats(fetchFn: FetchLike = defaultFetch): Promise<ServiceStats> {
  const resp = await fetchFn("/api/v1/stats");
  if (!resp.ok) {
    throw new ServiceError(resp.status, await errorReason(resp));
  }
  return (await resp.json()) as ServiceStats;
}

/** Error bodies look like {"error": "..."}; fall back to the bare status. */
async function errorReason(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: unknown };
    if (body && typeof body.error === "string") {
      return body.error;
    }
  } catch {
    // non-JSON body, use the status line below
  }
  return `request failed with status ${resp.status}`;
}
