/**
 * Typed client for the curation review server. Every request the UI
 * makes goes through this module; there are no other endpoints.
 */

export interface QueueItem {
  sample_id: string;
  image_ref: string;
  short_caption: string;
  labels: string[];
  concept_count: number;
  status: string;
}

export interface Progress {
  total: number;
  ranked: number;
  remaining: number;
}

export interface QueueResponse extends Progress {
  done: boolean;
  item: QueueItem | null;
}

export interface RankResponse extends Progress {
  ok: boolean;
  sample_id: string;
}

export interface CriteriaFlags {
  concepts_present: boolean;
  placement_reasonable: boolean;
  artifact_free: boolean;
}

export type CriterionKey = keyof CriteriaFlags;

export const CRITERION_KEYS: readonly CriterionKey[] = [
  "concepts_present",
  "placement_reasonable",
  "artifact_free",
];

export interface StatsRow {
  group: string;
  counts: Record<string, number>;
  percentages: Record<string, number>;
  total: number;
}

export interface FinalizeResponse {
  kept: number;
  total: number;
  output: string | null;
  sample_ids: string[];
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** The surface the controller depends on; tests substitute fakes. */
export interface ReviewBackend {
  nextItem(): Promise<QueueResponse>;
  submitRank(
    sampleId: string,
    rank: number,
    criteria: CriteriaFlags,
  ): Promise<RankResponse>;
  finalize(force?: boolean): Promise<FinalizeResponse>;
  rankStats(): Promise<{ rows: StatsRow[] }>;
  imageUrl(sampleId: string): string;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi implements ReviewBackend {
  constructor(
    private readonly baseUrl: string,
    private readonly reviewerId: string,
    private readonly fetchFn: FetchLike = (input, init) =>
      globalThis.fetch(input, init),
  ) {}

  async nextItem(): Promise<QueueResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/queue/next`, {
      method: "GET",
      headers: { "x-reviewer-id": this.reviewerId },
    });
    return checked<QueueResponse>(res);
  }

  async submitRank(
    sampleId: string,
    rank: number,
    criteria: CriteriaFlags,
  ): Promise<RankResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/rank`, {
      method: "POST",
      headers: {
        "content-type": "application/json",
        "x-reviewer-id": this.reviewerId,
      },
      body: JSON.stringify({ sample_id: sampleId, rank, criteria }),
    });
    return checked<RankResponse>(res);
  }

  async finalize(force = false): Promise<FinalizeResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/finalize`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ force }),
    });
    return checked<FinalizeResponse>(res);
  }

  async rankStats(): Promise<{ rows: StatsRow[] }> {
    const res = await this.fetchFn(`${this.baseUrl}/stats/ranks`, {
      method: "GET",
    });
    return checked<{ rows: StatsRow[] }>(res);
  }

  imageUrl(sampleId: string): string {
    return `${this.baseUrl}/image/${encodeURIComponent(sampleId)}`;
  }
}

/** Servers report failures as {"error": reason}; surface that text. */
async function checked<T>(res: Response): Promise<T> {
  if (res.ok) {
    return (await res.json()) as T;
  }
  let message = `HTTP ${res.status}`;
  try {
    const body = (await res.json()) as { error?: unknown };
    if (typeof body.error === "string" && body.error) {
      message = body.error;
    }
  } catch {
    // Non-JSON error body; keep the status text.
  }
  throw new ApiError(res.status, message);
}
