import { fetchStats } from "./api.js";
import type { Stage } from "./api.js";
import { SearchController } from "./console.js";
import type { SubmitOutcome } from "./console.js";
import { renderBanner, renderHistory, renderPanel } from "./render.js";
import { DEFAULT_TOP_K, initialState } from "./state.js";

const state = initialState();
const controller = new SearchController(state);

const form = document.getElementById("search-form") as HTMLFormElement;
const queryInput = document.getElementById("query") as HTMLInputElement;
const stageSelect = document.getElementById("stage") as HTMLSelectElement;
const topKInput = document.getElementById("top-k") as HTMLInputElement;
const compareButton = document.getElementById("compare") as HTMLButtonElement;
const bannerBox = document.getElementById("banners") as HTMLDivElement;
const panelBox = document.getElementById("panels") as HTMLDivElement;
const historyBox = document.getElementById("history") as HTMLDivElement;
const statsLine = document.getElementById("stats") as HTMLElement;

function syncState(): void {
  state.query = queryInput.value;
  state.stage = stageSelect.value as Stage;
  const k = parseInt(topKInput.value, 10);
  state.topKSegments = Number.isFinite(k) && k > 0 ? k : DEFAULT_TOP_K;
}

function applyOutcomes(outcomes: SubmitOutcome[]): void {
  const panels: string[] = [];
  const banners: string[] = [];
  for (const outcome of outcomes) {
    if (outcome.kind === "results") {
      panels.push(renderPanel(outcome.stage, outcome.response));
    } else if (outcome.kind === "error") {
      banners.push(renderBanner("error", `${outcome.stage}: ${outcome.message}`));
    } else if (outcome.kind === "invalid") {
      banners.push(renderBanner("notice", outcome.message));
    }
    // superseded: a newer submission owns the screen, leave it alone
  }
  if (panels.length > 0) {
    // errors fall through here, keeping whatever results were on screen
    panelBox.innerHTML = panels.join("");
  }
  if (banners.length > 0) {
    bannerBox.innerHTML = banners.join("");
  } else if (panels.length > 0) {
    bannerBox.innerHTML = "";
  }
  historyBox.innerHTML = renderHistory(state.history);
}

form.addEventListener("submit", (event) => {
  event.preventDefault();
  syncState();
  void controller.submitQuery().then((outcome) => applyOutcomes([outcome]));
});

compareButton.addEventListener("click", () => {
  syncState();
  void controller.compareStages().then(applyOutcomes);
});

void fetchStats()
  .then((stats) => {
    statsLine.textContent =
      `${stats.num_videos} videos / ${stats.num_segments} segments / ` +
      `${stats.index_kind} index / engine ${stats.engine_version}`;
  })
  .catch(() => {
    statsLine.textContent = "service unavailable";
  });
