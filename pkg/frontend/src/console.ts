/**
 * Search orchestration. The controller owns one in-flight request per stage:
 * submitting again for the same stage aborts the previous request before the
 * new one goes out. It never reorders, filters or rescores what the service
 * returns; results pass through exactly as received.
 */

import {
  postSearch,
  RequestCancelled,
  RequestTimeout,
  SEARCH_TIMEOUT_MS,
  ServiceError,
} from "./api.js";
import type { FetchLike, SearchResponse, Stage } from "./api.js";
import { pushHistory } from "./state.js";
import type { ConsoleState } from "./state.js";

export const EMPTY_QUERY_MESSAGE = "enter a query first";

export type SubmitOutcome =
  | { kind: "results"; stage: Stage; response: SearchResponse }
  | { kind: "error"; stage: Stage; message: string }
  | { kind: "invalid"; message: string }
  | { kind: "superseded"; stage: Stage };

export class SearchController {
  private inflight = new Map<Stage, AbortController>();

  constructor(
    private readonly state: ConsoleState,
    private readonly fetchFn?: FetchLike,
    private readonly timeoutMs: number = SEARCH_TIMEOUT_MS,
  ) {}

  /** One search for the stage currently selected in the state. */
  submitQuery(): Promise<SubmitOutcome> {
    return this.runStage(this.state.stage);
  }

  /**
   * Coarse and fine for the same query, concurrently. Each stage fails or
   * succeeds on its own, so a broken fine pass still leaves coarse results.
   */
  compareStages(): Promise<SubmitOutcome[]> {
    const query = this.state.query.trim();
    if (!query) {
      return Promise.resolve([{ kind: "invalid", message: EMPTY_QUERY_MESSAGE }]);
    }
    return Promise.all([this.runStage("coarse"), this.runStage("fine")]);
  }

  private async runStage(stage: Stage): Promise<SubmitOutcome> {
    const query = this.state.query.trim();
    if (!query) {
      // client-side validation, nothing reaches the network
      return { kind: "invalid", message: EMPTY_QUERY_MESSAGE };
    }

    this.inflight.get(stage)?.abort();
    const controller = new AbortController();
    this.inflight.set(stage, controller);

    const topK = this.state.topKSegments;
    const record = (status: "ok" | "error" | "timeout" | "cancelled", detail: string) =>
      pushHistory(this.state, {
        query,
        stage,
        topKSegments: topK,
        status,
        detail,
        at: Date.now(),
      });

    try {
      const response = await postSearch(
        { query, stage, top_k_segments: topK },
        { fetchFn: this.fetchFn, signal: controller.signal, timeoutMs: this.timeoutMs },
      );
      this.state.lastResponse = response;
      record("ok", `${response.results.length} results`);
      return { kind: "results", stage, response };
    } catch (err) {
      if (err instanceof RequestCancelled) {
        record("cancelled", "superseded by a newer submission");
        return { kind: "superseded", stage };
      }
      const message = describeError(err);
      record(err instanceof RequestTimeout ? "timeout" : "error", message);
      return { kind: "error", stage, message };
    } finally {
      if (this.inflight.get(stage) === controller) {
        this.inflight.delete(stage);
      }
    }
  }
}

function describeError(err: unknown): string {
  if (err instanceof RequestTimeout) {
    return `${err.message}; the service may be busy or down`;
  }
  if (err instanceof ServiceError) {
    return err.status > 0 ? `service error ${err.status}: ${err.message}` : err.message;
  }
  return String(err);
}
