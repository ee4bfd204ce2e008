import { describe, expect, it } from "vitest";

import { ReviewController } from "../src/state.js";
import { FakeBackend, item, queued, ranked, statsRow } from "./helpers.js";

function controllerWith(backend: FakeBackend): ReviewController {
  return new ReviewController(backend);
}

describe("ReviewController", () => {
  it("loads the first item and blocks submit until a rank key", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(item("s-0"), { ranked: 0 }));
    const c = controllerWith(backend);

    await c.loadNext();

    expect(c.state.screen).toBe("review");
    expect(c.state.item?.sample_id).toBe("s-0");
    expect(c.state.rank).toBeNull();
    expect(c.canSubmit()).toBe(false);

    await c.submit();
    expect(backend.rankCalls).toHaveLength(0);

    c.selectRank(4);
    expect(c.canSubmit()).toBe(true);
  });

  it("submits the selection and advances to the next item", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(
      queued(item("s-0"), { ranked: 0, remaining: 2, total: 2 }),
      queued(item("s-1"), { ranked: 1, remaining: 1, total: 2 }),
    );
    backend.rankResponses.push(
      ranked("s-0", { ranked: 1, remaining: 1, total: 2 }),
    );
    const c = controllerWith(backend);
    await c.loadNext();

    c.selectRank(4);
    c.toggleCriterion("concepts_present");
    await c.submit();

    expect(backend.rankCalls).toEqual([
      {
        sampleId: "s-0",
        rank: 4,
        criteria: {
          concepts_present: true,
          placement_reasonable: false,
          artifact_free: false,
        },
      },
    ]);
    expect(c.state.item?.sample_id).toBe("s-1");
    expect(c.state.lastSubmit).toContain("rank 4");
    expect(c.state.progress.ranked).toBe(1);
    // Fresh item, fresh selection.
    expect(c.state.rank).toBeNull();
    expect(c.state.criteria).toEqual({
      concepts_present: false,
      placement_reasonable: false,
      artifact_free: false,
    });
  });

  it("allows only one submit in flight", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(item("s-0")), queued(null));
    let release!: () => void;
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    backend.rankResponses.push(async () => {
      await gate;
      return ranked("s-0");
    });
    const c = controllerWith(backend);
    await c.loadNext();
    c.selectRank(3);

    const first = c.submit();
    const second = c.submit();
    release();
    await Promise.all([first, second]);

    expect(backend.rankCalls).toHaveLength(1);
  });

  it("rolls back the item on rejection and retries the same payload", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(item("s-0")), queued(item("s-1")));
    backend.rankResponses.push(new Error("boom"), ranked("s-0"));
    const c = controllerWith(backend);
    await c.loadNext();

    c.selectRank(3);
    c.toggleCriterion("placement_reasonable");
    await c.submit();

    // Nothing lost: same item, same rank, same toggles, banner shown.
    expect(c.state.error).toBe("boom");
    expect(c.state.screen).toBe("review");
    expect(c.state.item?.sample_id).toBe("s-0");
    expect(c.state.rank).toBe(3);
    expect(c.state.criteria.placement_reasonable).toBe(true);

    await c.retry();

    expect(backend.rankCalls).toHaveLength(2);
    expect(backend.rankCalls[1]).toEqual(backend.rankCalls[0]);
    expect(c.state.error).toBeNull();
    expect(c.state.item?.sample_id).toBe("s-1");
  });

  it("shows the completion screen on an empty queue and finalizes", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(null, { ranked: 5, remaining: 0 }));
    backend.finalizeResponses.push({
      kept: 3,
      total: 5,
      output: "manifest.final.json",
      sample_ids: ["s-0", "s-1", "s-3"],
    });
    const c = controllerWith(backend);
    await c.loadNext();

    expect(c.state.screen).toBe("done");
    expect(c.state.item).toBeNull();

    await c.finalize();

    expect(backend.finalizeCalls).toEqual([false]);
    expect(c.state.finalizeResult?.kept).toBe(3);
    expect(c.state.finalizeResult?.sample_ids).toEqual(["s-0", "s-1", "s-3"]);
  });

  it("banners a finalize conflict and retries it", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(null));
    backend.finalizeResponses.push(new Error("2 samples still unranked"), {
      kept: 1,
      total: 5,
      output: null,
      sample_ids: ["s-4"],
    });
    const c = controllerWith(backend);
    await c.loadNext();

    await c.finalize();
    expect(c.state.error).toBe("2 samples still unranked");
    expect(c.state.finalizeResult).toBeNull();

    await c.retry();
    expect(c.state.finalizeResult?.kept).toBe(1);
  });

  it("fetches stats rows and restores the previous screen", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(item("s-0")));
    backend.statsResponses.push({ rows: [statsRow()] });
    const c = controllerWith(backend);
    await c.loadNext();
    c.selectRank(5);

    await c.toggleStats();
    expect(c.state.screen).toBe("stats");
    expect(c.state.stats).toHaveLength(1);

    await c.toggleStats();
    expect(c.state.screen).toBe("review");
    expect(c.state.stats).toBeNull();
    // Flipping views loses nothing.
    expect(c.state.item?.sample_id).toBe("s-0");
    expect(c.state.rank).toBe(5);
  });

  it("banners a stats failure and retries the fetch", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(item("s-0")));
    backend.statsResponses.push(new Error("down"), { rows: [] });
    const c = controllerWith(backend);
    await c.loadNext();

    await c.toggleStats();
    expect(c.state.error).toBe("down");
    expect(c.state.screen).toBe("review");

    await c.retry();
    expect(c.state.screen).toBe("stats");
    expect(c.state.stats).toEqual([]);
  });

  it("banners a failed initial load and retries it", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(new Error("connection refused"));
    backend.nextResponses.push(queued(item("s-0")));
    const c = controllerWith(backend);

    await c.loadNext();
    expect(c.state.error).toBe("connection refused");

    await c.retry();
    expect(c.state.screen).toBe("review");
    expect(c.state.item?.sample_id).toBe("s-0");
  });

  it("reports the ranked fraction of the queue", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(item("s-1"), { total: 4, ranked: 1 }));
    const c = controllerWith(backend);

    expect(c.progressFraction()).toBe(0);
    await c.loadNext();
    expect(c.progressFraction()).toBe(0.25);
  });

  it("ignores rank keys outside the review screen", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(null));
    const c = controllerWith(backend);
    await c.loadNext();

    c.selectRank(4);
    c.toggleCriterion("artifact_free");

    expect(c.state.rank).toBeNull();
    expect(c.state.criteria.artifact_free).toBe(false);
  });

  it("notifies listeners on every transition", async () => {
    const backend = new FakeBackend();
    backend.nextResponses.push(queued(item("s-0")));
    const c = controllerWith(backend);
    const screens: string[] = [];
    c.onChange((state) => screens.push(state.screen));

    await c.loadNext();
    c.selectRank(2);

    expect(screens).toEqual(["loading", "review", "review"]);
  });
});
