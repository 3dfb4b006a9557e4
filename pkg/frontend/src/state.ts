import type { SearchResponse, Stage } from "./api.js";

export const HISTORY_LIMIT = 50;
export const DEFAULT_TOP_K = 200;

export type RequestStatus = "ok" | "error" | "timeout" | "cancelled";

export interface HistoryEntry {
  query: string;
  stage: Stage;
  topKSegments: number;
  status: RequestStatus;
  detail: string;
  at: number;
}

export interface ConsoleState {
  query: string;
  stage: Stage;
  topKSegments: number;
  lastResponse: SearchResponse | null;
  history: HistoryEntry[];
}

export function initialState(): ConsoleState {
  return {
    query: "",
    stage: "fine",
    topKSegments: DEFAULT_TOP_K,
    lastResponse: null,
    history: [],
  };
}

/** Append one request record; the oldest entries fall off past the cap. */
export function pushHistory(state: ConsoleState, entry: HistoryEntry): void {
  state.history.push(entry);
  if (state.history.length > HISTORY_LIMIT) {
    state.history.splice(0, state.history.length - HISTORY_LIMIT);
  }
}
