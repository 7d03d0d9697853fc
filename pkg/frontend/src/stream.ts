/**
 * Frame-stream subscription over server-sent events.
 *
 * The service replays all persisted frames before following live ones, so a
 * reconnect simply re-subscribes and lets the store's index-based dedupe
 * absorb the replay; the connection flag drives the UI banner.
 */

import type { SessionEvent } from "./store.js";

export interface EventSourceLike {
  addEventListener(type: string, listener: (event: MessageEvent) => void): void;
  close(): void;
  onerror: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface StreamOptions {
  retryMs?: number;
  eventSourceFactory?: EventSourceFactory;
  setTimeoutImpl?: (fn: () => void, ms: number) => unknown;
}

export interface StreamSubscription {
  close(): void;
}

export function subscribeFrames(
  url: string,
  onEvent: (event: SessionEvent) => void,
  options: StreamOptions = {},
): StreamSubscription {
  const retryMs = options.retryMs ?? 1000;
  const factory = options.eventSourceFactory ?? ((u: string) => new EventSource(u) as EventSourceLike);
  const schedule = options.setTimeoutImpl ?? ((fn, ms) => setTimeout(fn, ms));

  let source: EventSourceLike | null = null;
  let closed = false;
  let ended = false;

  const connect = () => {
    if (closed || ended) return;
    source = factory(url);
    source.onopen = () => onEvent({ type: "connection", connected: true });
    source.addEventListener("frame", (event) => {
      onEvent({ type: "frame", frame: JSON.parse(event.data) });
    });
    source.addEventListener("end", (event) => {
      const data = JSON.parse(event.data);
      ended = true;
      onEvent({
        type: "end",
        status: data.status,
        decision: data.decision ?? null,
        bestIndex: data.best_index ?? -1,
      });
      source?.close();
    });
    source.onerror = () => {
      if (closed || ended) return;
      onEvent({ type: "connection", connected: false });
      source?.close();
      schedule(connect, retryMs); // auto-retry; replay is deduped downstream
    };
  };

  connect();
  return {
    close() {
      closed = true;
      source?.close();
    },
  };
}
