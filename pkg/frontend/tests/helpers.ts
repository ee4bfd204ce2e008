/** Shared fakes and fixtures for the unit tests. */

import type {
  CriteriaFlags,
  FinalizeResponse,
  Progress,
  QueueItem,
  QueueResponse,
  RankResponse,
  ReviewBackend,
  StatsRow,
} from "../src/api.js";

type Scripted<T> = T | Error | (() => Promise<T>);

async function take<T>(queue: Array<Scripted<T>>, what: string): Promise<T> {
  const head = queue.shift();
  if (head === undefined) {
    throw new Error(`no scripted ${what} response left`);
  }
  if (head instanceof Error) {
    throw head;
  }
  if (typeof head === "function") {
    return (head as () => Promise<T>)();
  }
  return head;
}

export class FakeBackend implements ReviewBackend {
  nextResponses: Array<Scripted<QueueResponse>> = [];
  rankResponses: Array<Scripted<RankResponse>> = [];
  statsResponses: Array<Scripted<{ rows: StatsRow[] }>> = [];
  finalizeResponses: Array<Scripted<FinalizeResponse>> = [];

  nextCalls = 0;
  statsCalls = 0;
  finalizeCalls: boolean[] = [];
  rankCalls: Array<{
    sampleId: string;
    rank: number;
    criteria: CriteriaFlags;
  }> = [];

  nextItem(): Promise<QueueResponse> {
    this.nextCalls += 1;
    return take(this.nextResponses, "queue");
  }

  submitRank(
    sampleId: string,
    rank: number,
    criteria: CriteriaFlags,
  ): Promise<RankResponse> {
    this.rankCalls.push({ sampleId, rank, criteria: { ...criteria } });
    return take(this.rankResponses, "rank");
  }

  finalize(force = false): Promise<FinalizeResponse> {
    this.finalizeCalls.push(force);
    return take(this.finalizeResponses, "finalize");
  }

  rankStats(): Promise<{ rows: StatsRow[] }> {
    this.statsCalls += 1;
    return take(this.statsResponses, "stats");
  }

  imageUrl(sampleId: string): string {
    return `/image/${sampleId}`;
  }
}

export function item(id: string, over: Partial<QueueItem> = {}): QueueItem {
  return {
    sample_id: id,
    image_ref: `finals/${id}.png`,
    short_caption: `a photo of ${id}`,
    labels: ["cat", "dog"],
    concept_count: 2,
    status: "pending",
    ...over,
  };
}

export function queued(
  next: QueueItem | null,
  progress: Partial<Progress> = {},
): QueueResponse {
  const merged: Progress = { total: 5, ranked: 0, remaining: 5, ...progress };
  return { ...merged, done: next === null, item: next };
}

export function ranked(
  sampleId: string,
  progress: Partial<Progress> = {},
): RankResponse {
  const merged: Progress = { total: 5, ranked: 1, remaining: 4, ...progress };
  return { ...merged, ok: true, sample_id: sampleId };
}

export function statsRow(over: Partial<StatsRow> = {}): StatsRow {
  return {
    group: "<=3 concepts",
    counts: { "1": 0, "2": 0, "3": 0, "4": 1, "5": 1 },
    percentages: { "1": 0.0, "2": 0.0, "3": 0.0, "4": 50.0, "5": 50.0 },
    total: 2,
    ...over,
  };
}

export async function until(
  cond: () => boolean,
  timeoutMs = 10000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!cond()) {
    if (Date.now() > deadline) {
      throw new Error("condition not reached in time");
    }
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}
