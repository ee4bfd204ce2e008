/**
 * View state and the transitions driving the review loop.
 *
 * The controller owns one mutable state object and notifies listeners
 * after every change. Submitting advances optimistically: the screen
 * flips to loading while POST /rank is in flight, and the ranked item
 * is restored untouched (rank selection and toggles included) if the
 * server rejects it.
 */

import type {
  CriteriaFlags,
  FinalizeResponse,
  Progress,
  QueueItem,
  ReviewBackend,
  StatsRow,
} from "./api.js";

export type Screen = "loading" | "review" | "done" | "stats";

export interface ViewState {
  screen: Screen;
  item: QueueItem | null;
  progress: Progress;
  rank: number | null;
  criteria: CriteriaFlags;
  submitting: boolean;
  lastSubmit: string;
  error: string | null;
  stats: StatsRow[] | null;
  finalizeResult: FinalizeResponse | null;
  finalizing: boolean;
}

export function freshCriteria(): CriteriaFlags {
  return {
    concepts_present: false,
    placement_reasonable: false,
    artifact_free: false,
  };
}

function initialState(): ViewState {
  return {
    screen: "loading",
    item: null,
    progress: { total: 0, ranked: 0, remaining: 0 },
    rank: null,
    criteria: freshCriteria(),
    submitting: false,
    lastSubmit: "",
    error: null,
    stats: null,
    finalizeResult: null,
    finalizing: false,
  };
}

function describe(err: unknown): string {
  if (err instanceof Error && err.message) {
    return err.message;
  }
  return String(err);
}

export class ReviewController {
  readonly state: ViewState = initialState();

  private listeners: Array<(state: ViewState) => void> = [];
  private retryAction: (() => Promise<void>) | null = null;
  private statsReturn: Screen = "loading";

  constructor(private readonly api: ReviewBackend) {}

  onChange(listener: (state: ViewState) => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  /** Fraction of the queue already ranked, in [0, 1]. */
  progressFraction(): number {
    const { total, ranked } = this.state.progress;
    return total > 0 ? ranked / total : 0;
  }

  canSubmit(): boolean {
    return (
      this.state.screen === "review" &&
      this.state.item !== null &&
      this.state.rank !== null &&
      !this.state.submitting
    );
  }

  selectRank(rank: number): void {
    if (this.state.screen !== "review" || this.state.item === null) {
      return;
    }
    if (!Number.isInteger(rank) || rank < 1 || rank > 5) {
      return;
    }
    this.state.rank = rank;
    this.notify();
  }

  toggleCriterion(key: keyof CriteriaFlags): void {
    if (this.state.screen !== "review" || this.state.item === null) {
      return;
    }
    this.state.criteria[key] = !this.state.criteria[key];
    this.notify();
  }

  async loadNext(): Promise<void> {
    this.state.screen = "loading";
    this.state.error = null;
    this.notify();
    try {
      const queue = await this.api.nextItem();
      this.state.progress = {
        total: queue.total,
        ranked: queue.ranked,
        remaining: queue.remaining,
      };
      if (queue.done || queue.item === null) {
        this.state.screen = "done";
        this.state.item = null;
      } else {
        this.state.screen = "review";
        this.state.item = queue.item;
      }
      this.state.rank = null;
      this.state.criteria = freshCriteria();
    } catch (err) {
      this.state.error = describe(err);
      this.retryAction = () => this.loadNext();
    }
    this.notify();
  }

  async submit(): Promise<void> {
    if (!this.canSubmit()) {
      return;
    }
    const item = this.state.item as QueueItem;
    const rank = this.state.rank as number;
    const criteria = { ...this.state.criteria };
    this.state.submitting = true;
    this.state.screen = "loading";
    this.state.error = null;
    this.notify();
    try {
      const resp = await this.api.submitRank(item.sample_id, rank, criteria);
      this.state.progress = {
        total: resp.total,
        ranked: resp.ranked,
        remaining: resp.remaining,
      };
      this.state.lastSubmit = `saved rank ${rank} for ${resp.sample_id}`;
      this.state.submitting = false;
      await this.loadNext();
    } catch (err) {
      // Roll back: same item, same selection, nothing lost.
      this.state.submitting = false;
      this.state.screen = "review";
      this.state.item = item;
      this.state.rank = rank;
      this.state.criteria = criteria;
      this.state.error = describe(err);
      this.retryAction = () => this.submit();
      this.notify();
    }
  }

  async retry(): Promise<void> {
    const action = this.retryAction;
    if (action === null) {
      return;
    }
    this.retryAction = null;
    this.state.error = null;
    this.notify();
    await action();
  }

  async finalize(force = false): Promise<void> {
    if (this.state.screen !== "done" || this.state.finalizing) {
      return;
    }
    this.state.finalizing = true;
    this.state.error = null;
    this.notify();
    try {
      this.state.finalizeResult = await this.api.finalize(force);
    } catch (err) {
      this.state.error = describe(err);
      this.retryAction = () => this.finalize(force);
    }
    this.state.finalizing = false;
    this.notify();
  }

  /** Stats are display-only; rows come straight from the server. */
  async toggleStats(): Promise<void> {
    if (this.state.screen === "stats") {
      this.state.screen = this.statsReturn;
      this.state.stats = null;
      this.notify();
      return;
    }
    if (this.state.screen === "loading") {
      return;
    }
    const from = this.state.screen;
    try {
      const { rows } = await this.api.rankStats();
      this.statsReturn = from;
      this.state.stats = rows;
      this.state.screen = "stats";
      this.state.error = null;
    } catch (err) {
      this.state.error = describe(err);
      this.retryAction = () => this.toggleStats();
    }
    this.notify();
  }
}
