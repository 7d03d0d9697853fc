/**
 * Pure session-view state: everything the UI shows is a fold of the event
 * stream through `reduce`, so replaying a recorded stream reproduces the
 * exact same view.
 */

export type SessionStatus =
  | "pending"
  | "running"
  | "stopped_by_user"
  | "converged"
  | "failed"
  | "accepted"
  | "unknown";

export interface FrameSummary {
  index: number;
  loss_total: number;
  components: Record<string, number>;
  image_url: string;
  thumbnail_url: string;
}

export interface StopDecision {
  reason: string;
  stop_index: number;
}

export type SessionEvent =
  | { type: "snapshot"; status: SessionStatus; frames: FrameSummary[]; decision?: StopDecision | null }
  | { type: "frame"; frame: FrameSummary }
  | { type: "end"; status: SessionStatus; decision: StopDecision | null; bestIndex: number }
  | { type: "connection"; connected: boolean }
  | { type: "not-found" }
  | { type: "stop-requested" }
  | { type: "select"; index: number }
  | { type: "accepted"; index: number };

export interface SessionView {
  sessionId: string;
  status: SessionStatus;
  frames: FrameSummary[];
  decision: StopDecision | null;
  bestIndex: number;
  selectedIndex: number | null;
  stopRequested: boolean;
  connected: boolean;
  notFound: boolean;
  droppedEvents: number;
}

const RUNNING: SessionStatus[] = ["pending", "running", "unknown"];
const ACCEPTABLE: SessionStatus[] = ["stopped_by_user", "converged", "failed"];

export function initialView(sessionId: string): SessionView {
  return {
    sessionId,
    status: "unknown",
    frames: [],
    decision: null,
    bestIndex: -1,
    selectedIndex: null,
    stopRequested: false,
    connected: false,
    notFound: false,
    droppedEvents: 0,
  };
}

/** Append a frame iff it extends the sequence; replayed duplicates are
 * dropped and out-of-order arrivals counted, never reordered. */
function appendFrame(view: SessionView, frame: FrameSummary): SessionView {
  if (frame.index < view.frames.length) {
    return view; // replay duplicate
  }
  if (frame.index > view.frames.length) {
    return { ...view, droppedEvents: view.droppedEvents + 1 };
  }
  const status = RUNNING.includes(view.status) ? "running" : view.status;
  return { ...view, status, frames: [...view.frames, frame] };
}

export function reduce(view: SessionView, event: SessionEvent): SessionView {
  switch (event.type) {
    case "snapshot": {
      const frames = [...event.frames].sort((a, b) => a.index - b.index);
      let next = { ...view, status: event.status, decision: event.decision ?? view.decision, frames: [] as FrameSummary[] };
      for (const frame of frames) {
        next = appendFrame(next, frame);
      }
      return next;
    }
    case "frame":
      return appendFrame(view, event.frame);
    case "end":
      return { ...view, status: event.status, decision: event.decision, bestIndex: event.bestIndex };
    case "connection":
      return { ...view, connected: event.connected };
    case "not-found":
      return { ...view, notFound: true, status: "unknown" };
    case "stop-requested":
      return { ...view, stopRequested: true };
    case "select":
      if (event.index < 0 || event.index >= view.frames.length) {
        return view;
      }
      return { ...view, selectedIndex: event.index };
    case "accepted":
      return { ...view, status: "accepted", selectedIndex: event.index };
  }
}

export function replay(sessionId: string, events: SessionEvent[]): SessionView {
  return events.reduce(reduce, initialView(sessionId));
}

// -- derived view models (what the DOM layer renders verbatim) --------------

export function isTerminal(view: SessionView): boolean {
  return !RUNNING.includes(view.status);
}

/** Stop is enabled only while the session runs and only until first use. */
export function canStop(view: SessionView): boolean {
  return RUNNING.includes(view.status) && !view.stopRequested && !view.notFound;
}

/** Accept needs a finished session with at least one frame. */
export function canAccept(view: SessionView): boolean {
  return ACCEPTABLE.includes(view.status) && view.frames.length > 0;
}

export function latestFrame(view: SessionView): FrameSummary | null {
  return view.frames.length ? view.frames[view.frames.length - 1] : null;
}

export interface GalleryItem {
  index: number;
  lossTotal: number;
  thumbnailUrl: string;
  imageUrl: string;
  selected: boolean;
  best: boolean;
}

export function galleryItems(view: SessionView): GalleryItem[] {
  return view.frames.map((frame) => ({
    index: frame.index,
    lossTotal: frame.loss_total,
    thumbnailUrl: frame.thumbnail_url,
    imageUrl: frame.image_url,
    selected: view.selectedIndex === frame.index,
    best: view.bestIndex === frame.index,
  }));
}

export interface ChartSeries {
  steps: number[];
  total: number[];
  components: Record<string, number[]>;
}

/** Loss curves keyed by step index; the chart plots these on a log scale
 * with the total highlighted. */
export function chartSeries(view: SessionView): ChartSeries {
  const steps = view.frames.map((f) => f.index);
  const total = view.frames.map((f) => f.loss_total);
  const components: Record<string, number[]> = {};
  for (const frame of view.frames) {
    for (const [name, value] of Object.entries(frame.components)) {
      (components[name] ??= []).push(value);
    }
  }
  return { steps, total, components };
}
