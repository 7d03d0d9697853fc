import { describe, expect, it } from "vitest";

import {
  FrameSummary,
  SessionEvent,
  canAccept,
  canStop,
  chartSeries,
  galleryItems,
  initialView,
  latestFrame,
  reduce,
  replay,
} from "../src/store.js";

function frame(index: number, loss = 1 / (index + 1)): FrameSummary {
  return {
    index,
    loss_total: loss,
    components: { sim_dino: loss / 2, sim_ir: loss / 2, bg: 0 },
    image_url: `/sessions/s/frames/${index}/image`,
    thumbnail_url: `/sessions/s/frames/${index}/thumb`,
  };
}

function recordedSession(steps: number): SessionEvent[] {
  const events: SessionEvent[] = [{ type: "connection", connected: true }];
  for (let i = 0; i < steps; i++) {
    events.push({ type: "frame", frame: frame(i) });
  }
  events.push({
    type: "end",
    status: "converged",
    decision: { reason: "max_iterations", stop_index: steps - 1 },
    bestIndex: steps - 1,
  });
  return events;
}

describe("stream fidelity", () => {
  it("renders ten thumbnails and ten chart points, in step order", () => {
    const view = replay("s", recordedSession(10));
    const gallery = galleryItems(view);
    expect(gallery).toHaveLength(10);
    expect(gallery.map((item) => item.index)).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    expect(gallery.map((item) => item.thumbnailUrl)).toEqual(
      Array.from({ length: 10 }, (_, i) => `/sessions/s/frames/${i}/thumb`),
    );

    const series = chartSeries(view);
    expect(series.steps).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    expect(series.total).toHaveLength(10);
    expect(series.components.sim_dino).toHaveLength(10);
    expect(view.status).toBe("converged");
  });

  it("reconnect replay introduces no gaps or duplicates", () => {
    const events = recordedSession(10);
    // connection drops after frame 6, server replays everything from 0
    const withReconnect: SessionEvent[] = [
      ...events.slice(0, 8), // connection + frames 0..6
      { type: "connection", connected: false },
      { type: "connection", connected: true },
      ...events.slice(1), // full replay: frames 0..9 + end
    ];
    const view = replay("s", withReconnect);
    expect(view.frames.map((f) => f.index)).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    expect(view.droppedEvents).toBe(0);
    expect(view.status).toBe("converged");
  });

  it("view state is a pure function of the event stream", () => {
    const events = recordedSession(10);
    const a = replay("s", events);
    const b = replay("s", events);
    expect(b).toEqual(a);
  });

  it("out-of-order frames are never reordered, only counted", () => {
    let view = initialView("s");
    view = reduce(view, { type: "frame", frame: frame(0) });
    view = reduce(view, { type: "frame", frame: frame(2) }); // gap
    view = reduce(view, { type: "frame", frame: frame(1) });
    view = reduce(view, { type: "frame", frame: frame(1) }); // duplicate
    expect(view.frames.map((f) => f.index)).toEqual([0, 1]);
    expect(view.droppedEvents).toBe(1);
    const indices = galleryItems(view).map((i) => i.index);
    expect([...indices].sort((a, b) => a - b)).toEqual(indices); // strictly increasing
  });

  it("snapshot then live frames continue the sequence", () => {
    let view = initialView("s");
    view = reduce(view, {
      type: "snapshot",
      status: "running",
      frames: [frame(1), frame(0), frame(2)], // arrives unsorted
    });
    expect(view.frames.map((f) => f.index)).toEqual([0, 1, 2]);
    view = reduce(view, { type: "frame", frame: frame(3) });
    expect(latestFrame(view)?.index).toBe(3);
  });
});

describe("controls state derives solely from status", () => {
  it("stop enabled iff running; accept enabled iff terminal", () => {
    let view = replay("s", [
      { type: "connection", connected: true },
      { type: "frame", frame: frame(0) },
    ]);
    expect(canStop(view)).toBe(true);
    expect(canAccept(view)).toBe(false);

    view = reduce(view, {
      type: "end",
      status: "stopped_by_user",
      decision: { reason: "user_stop", stop_index: 0 },
      bestIndex: 0,
    });
    expect(canStop(view)).toBe(false);
    expect(canAccept(view)).toBe(true);

    view = reduce(view, { type: "accepted", index: 0 });
    expect(view.status).toBe("accepted");
    expect(canAccept(view)).toBe(false);
  });

  it("stop-requested disables further stops before the server confirms", () => {
    let view = replay("s", [{ type: "frame", frame: frame(0) }]);
    view = reduce(view, { type: "stop-requested" });
    expect(canStop(view)).toBe(false);
  });

  it("accept requires at least one frame", () => {
    let view = initialView("s");
    view = reduce(view, { type: "end", status: "failed", decision: null, bestIndex: -1 });
    expect(canAccept(view)).toBe(false);
  });

  it("unknown session shows not-found and no controls", () => {
    const view = replay("s", [{ type: "not-found" }]);
    expect(view.notFound).toBe(true);
    expect(canStop(view)).toBe(false);
    expect(canAccept(view)).toBe(false);
  });
});

describe("selection", () => {
  it("selecting a frame marks exactly that gallery item", () => {
    let view = replay("s", recordedSession(5));
    view = reduce(view, { type: "select", index: 3 });
    const selected = galleryItems(view).filter((item) => item.selected);
    expect(selected.map((item) => item.index)).toEqual([3]);
  });

  it("selection outside the gallery is ignored", () => {
    let view = replay("s", recordedSession(3));
    view = reduce(view, { type: "select", index: 9 });
    expect(view.selectedIndex).toBeNull();
  });

  it("best frame is highlighted after the terminal event", () => {
    const view = replay("s", recordedSession(4));
    const best = galleryItems(view).filter((item) => item.best);
    expect(best.map((item) => item.index)).toEqual([3]);
  });
});
