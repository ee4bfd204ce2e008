/**
 * DOM rendering. The whole app is redrawn from the current view state
 * on every change; the state object stays the single source of truth.
 */

import { CRITERION_KEYS } from "./api.js";
import type { CriterionKey, StatsRow } from "./api.js";
import type { ViewState } from "./state.js";

export interface ViewActions {
  selectRank(rank: number): void;
  toggleCriterion(key: CriterionKey): void;
  submit(): unknown;
  retry(): unknown;
  finalize(): unknown;
  toggleStats(): unknown;
  canSubmit(): boolean;
  progressFraction(): number;
  imageUrl(sampleId: string): string;
}

const CRITERION_LABELS: Record<CriterionKey, string> = {
  concepts_present: "concepts present (c)",
  placement_reasonable: "placement reasonable (p)",
  artifact_free: "artifact free (a)",
};

const RANKS = [1, 2, 3, 4, 5];

type Child = Node | string;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Child[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) {
    node.setAttribute(name, value);
  }
  node.append(...children);
  return node;
}

export function render(
  root: HTMLElement,
  state: ViewState,
  actions: ViewActions,
): void {
  const parts: Child[] = [header(state, actions)];
  if (state.error !== null) {
    parts.push(errorBanner(state.error, actions));
  }
  switch (state.screen) {
    case "loading":
      parts.push(el("p", { id: "loading-note", class: "muted" }, ["loading"]));
      break;
    case "review":
      parts.push(reviewPanel(state, actions));
      break;
    case "done":
      parts.push(completionPanel(state, actions));
      break;
    case "stats":
      parts.push(statsPanel(state.stats ?? []));
      break;
  }
  root.replaceChildren(...parts);
}

function header(state: ViewState, actions: ViewActions): HTMLElement {
  const { total, ranked } = state.progress;
  const percent = Math.round(actions.progressFraction() * 100);
  const bar = el("div", { class: "progress-track" }, [
    el("div", {
      id: "progress-bar",
      class: "progress-fill",
      style: `width: ${percent}%`,
    }),
  ]);
  return el("header", {}, [
    el("h1", {}, ["sample review"]),
    el("div", { class: "progress" }, [
      bar,
      el("span", { id: "progress-text" }, [`${ranked} / ${total} ranked`]),
    ]),
    el("p", { class: "muted hint" }, [
      "keys: 1-5 rank, c/p/a criteria, Enter submit, s stats, r retry",
    ]),
  ]);
}

function errorBanner(message: string, actions: ViewActions): HTMLElement {
  const retry = el("button", { id: "retry-button", type: "button" }, [
    "retry (r)",
  ]);
  retry.addEventListener("click", () => void actions.retry());
  return el("div", { id: "error-banner", role: "alert" }, [
    el("span", { id: "error-message" }, [message]),
    retry,
  ]);
}

function reviewPanel(state: ViewState, actions: ViewActions): HTMLElement {
  const item = state.item;
  if (item === null) {
    return el("p", { class: "muted" }, ["no item"]);
  }

  const image = el("img", {
    id: "sample-image",
    src: actions.imageUrl(item.sample_id),
    alt: item.short_caption || item.sample_id,
  });

  const labels = el(
    "ul",
    { id: "labels", class: "labels" },
    item.labels.map((label) => el("li", { class: "label" }, [label])),
  );

  const rankRow = el(
    "div",
    { id: "rank-row", role: "group" },
    RANKS.map((rank) => {
      const selected = state.rank === rank;
      const button = el(
        "button",
        {
          type: "button",
          class: selected ? "rank-button selected" : "rank-button",
          "data-rank": String(rank),
          "aria-pressed": selected ? "true" : "false",
        },
        [String(rank)],
      );
      button.addEventListener("click", () => actions.selectRank(rank));
      return button;
    }),
  );

  const criteria = el(
    "div",
    { id: "criteria" },
    CRITERION_KEYS.map((key) => {
      const box = el("input", {
        type: "checkbox",
        id: `criterion-${key}`,
        "data-criterion": key,
      });
      box.checked = state.criteria[key];
      box.addEventListener("change", () => actions.toggleCriterion(key));
      return el("label", { class: "criterion" }, [
        box,
        CRITERION_LABELS[key],
      ]);
    }),
  );

  const submit = el(
    "button",
    { id: "submit-button", type: "button" },
    ["submit (Enter)"],
  );
  submit.disabled = !actions.canSubmit();
  submit.addEventListener("click", () => void actions.submit());

  return el("main", { id: "review" }, [
    el("figure", {}, [
      image,
      el("figcaption", { id: "caption" }, [item.short_caption]),
    ]),
    el("div", { class: "meta" }, [
      labels,
      el("span", { id: "concept-count" }, [
        `${item.concept_count} concepts`,
      ]),
      el("span", { id: "sample-id", class: "muted" }, [item.sample_id]),
    ]),
    rankRow,
    criteria,
    submit,
    el("p", { id: "last-submit", class: "muted" }, [state.lastSubmit]),
  ]);
}

function completionPanel(
  state: ViewState,
  actions: ViewActions,
): HTMLElement {
  const finalize = el(
    "button",
    { id: "finalize-button", type: "button" },
    ["finalize kept samples (Enter)"],
  );
  finalize.disabled = state.finalizing;
  finalize.addEventListener("click", () => void actions.finalize());

  const parts: Child[] = [
    el("h2", {}, ["queue complete"]),
    el("p", {}, [
      `all ${state.progress.total} samples ranked; finalize keeps ranks 4 and 5`,
    ]),
    finalize,
  ];
  const result = state.finalizeResult;
  if (result !== null) {
    parts.push(
      el("div", { id: "finalize-result" }, [
        el("p", { id: "finalize-summary" }, [
          `kept ${result.kept} of ${result.total}`,
        ]),
        el(
          "ul",
          { id: "kept-ids" },
          result.sample_ids.map((id) => el("li", {}, [id])),
        ),
        el("p", { id: "finalize-output", class: "muted" }, [
          result.output === null ? "" : `written to ${result.output}`,
        ]),
      ]),
    );
  }
  return el("main", { id: "completion" }, parts);
}

/**
 * Rank distribution exactly as served; the client only formats the
 * server's percentage numbers, it never recomputes them.
 */
function statsPanel(rows: StatsRow[]): HTMLElement {
  if (rows.length === 0) {
    return el("main", { id: "stats" }, [
      el("p", { class: "muted" }, ["no ranked samples yet"]),
    ]);
  }
  const head = el("tr", {}, [
    el("th", {}, ["group"]),
    ...RANKS.map((rank) => el("th", {}, [String(rank)])),
    el("th", {}, ["total"]),
  ]);
  const body = rows.map((row) =>
    el("tr", {}, [
      el("td", {}, [row.group]),
      ...RANKS.map((rank) => {
        const key = String(rank);
        const count = row.counts[key] ?? 0;
        const percent = row.percentages[key] ?? 0;
        return el("td", { "data-group": row.group, "data-rank": key }, [
          `${count} (${percent.toFixed(1)}%)`,
        ]);
      }),
      el("td", {}, [String(row.total)]),
    ]),
  );
  return el("main", { id: "stats" }, [
    el("table", { id: "stats-table" }, [
      el("thead", {}, [head]),
      el("tbody", {}, body),
    ]),
    el("p", { class: "muted hint" }, ["press s to go back"]),
  ]);
}
