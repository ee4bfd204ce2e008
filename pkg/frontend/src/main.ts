/** Entry point: wire the API client, controller, view, and keys. */

import { ReviewApi } from "./api.js";
import { bindKeys } from "./keyboard.js";
import { ReviewController } from "./state.js";
import { render } from "./view.js";
import type { ViewActions } from "./view.js";

const REVIEWER_KEY = "review-ui.reviewer-id";

function reviewerId(): string {
  let id = localStorage.getItem(REVIEWER_KEY);
  if (!id) {
    id = crypto.randomUUID();
    localStorage.setItem(REVIEWER_KEY, id);
  }
  return id;
}

export function mount(root: HTMLElement, baseUrl = ""): ReviewController {
  const api = new ReviewApi(baseUrl, reviewerId());
  const controller = new ReviewController(api);
  const actions: ViewActions = {
    selectRank: (rank) => controller.selectRank(rank),
    toggleCriterion: (key) => controller.toggleCriterion(key),
    submit: () => controller.submit(),
    retry: () => controller.retry(),
    finalize: () => controller.finalize(),
    toggleStats: () => controller.toggleStats(),
    canSubmit: () => controller.canSubmit(),
    progressFraction: () => controller.progressFraction(),
    imageUrl: (sampleId) => api.imageUrl(sampleId),
  };
  controller.onChange((state) => render(root, state, actions));
  bindKeys(window, controller);
  void controller.loadNext();
  return controller;
}

const appRoot = document.getElementById("app");
if (appRoot) {
  mount(appRoot);
}
