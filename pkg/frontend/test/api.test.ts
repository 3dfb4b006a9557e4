import { describe, expect, it } from "vitest";

import {
  fetchStats,
  postSearch,
  RequestCancelled,
  RequestTimeout,
  ServiceError,
} from "../src/api.js";
import type { FetchLike, SearchRequest, SearchResponse } from "../src/api.js";

const REQ: SearchRequest = { query: "dog jumps", stage: "fine", top_k_segments: 50 };

const RESPONSE: SearchResponse = {
  results: [
    {
      video_id: "v01",
      start_s: 4.0,
      end_s: 12.0,
      score: 0.91,
      rank: 1,
      stage: "fine",
      video_duration_s: 60.0,
    },
  ],
  timings_ms: { segment_retrieval_ms: 1.5 },
  engine_version: "0.1.0",
  index_kind: "flat",
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** Never resolves; rejects with the abort reason once the signal fires. */
function hangingFetch(seen: AbortSignal[]): FetchLike {
  return (_url, init) =>
    new Promise((_resolve, reject) => {
      const signal = init?.signal as AbortSignal;
      seen.push(signal);
      signal.addEventListener("abort", () => reject(signal.reason), { once: true });
    });
}

describe("postSearch", () => {
  it("posts the request body to /api/v1/search", async () => {
    const calls: Array<{ url: string; init: RequestInit | undefined }> = [];
    const fetchFn: FetchLike = (url, init) => {
      calls.push({ url, init });
      return Promise.resolve(jsonResponse(RESPONSE));
    };

    const out = await postSearch(REQ, { fetchFn });

    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("/api/v1/search");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(calls[0].init?.body as string)).toEqual(REQ);
    expect(out).toEqual(RESPONSE);
  });

  it("surfaces the service's reason on a 400", async () => {
    const fetchFn: FetchLike = () =>
      Promise.resolve(jsonResponse({ error: "query must not be empty" }, 400));

    const err = await postSearch(REQ, { fetchFn }).catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(400);
    expect(err.message).toBe("query must not be empty");
  });

  it("falls back to the status when the error body is not JSON", async () => {
    const fetchFn: FetchLike = () => Promise.resolve(new Response("boom", { status: 503 }));

    const err = await postSearch(REQ, { fetchFn }).catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(503);
    expect(err.message).toContain("503");
  });

  it("maps an unreachable service onto status 0", async () => {
    const fetchFn: FetchLike = () => Promise.reject(new TypeError("fetch failed"));

    const err = await postSearch(REQ, { fetchFn }).catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(0);
    expect(err.message).toContain("unreachable");
  });

  it("times out when no response arrives before the deadline", async () => {
    const seen: AbortSignal[] = [];

    const err = await postSearch(REQ, { fetchFn: hangingFetch(seen), timeoutMs: 20 }).catch(
      (e) => e,
    );
    expect(err).toBeInstanceOf(RequestTimeout);
    expect(seen[0].aborted).toBe(true);
  });

  it("reports cancellation distinctly from timeout", async () => {
    const seen: AbortSignal[] = [];
    const outer = new AbortController();
    const pending = postSearch(REQ, {
      fetchFn: hangingFetch(seen),
      signal: outer.signal,
      timeoutMs: 5_000,
    });
    outer.abort();

    const err = await pending.catch((e) => e);
    expect(err).toBeInstanceOf(RequestCancelled);
  });

  it("rejects immediately when the signal is already aborted", async () => {
    const outer = new AbortController();
    outer.abort();
    let called = false;
    const fetchFn: FetchLike = () => {
      called = true;
      return Promise.resolve(jsonResponse(RESPONSE));
    };

    const err = await postSearch(REQ, { fetchFn, signal: outer.signal }).catch((e) => e);
    expect(err).toBeInstanceOf(RequestCancelled);
    expect(called).toBe(false);
  });
});

describe("fetchStats", () => {
  it("reads /api/v1/stats", async () => {
    const urls: string[] = [];
    const stats = { num_videos: 3, num_segments: 40, index_kind: "flat" };
    const fetchFn: FetchLike = (url) => {
      urls.push(url);
      return Promise.resolve(jsonResponse(stats));
    };

    const out = await fetchStats(fetchFn);
    expect(urls).toEqual(["/api/v1/stats"]);
    expect(out.num_segments).toBe(40);
  });

  it("propagates failures as ServiceError", async () => {
    const fetchFn: FetchLike = () => Promise.resolve(jsonResponse({ error: "loading" }, 503));
    const err = await fetchStats(fetchFn).catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(503);
  });
});
