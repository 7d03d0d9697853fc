/**
 * Imperative shell around the pure store: owns the event fold, the stream
 * subscription, and the stop/accept actions (each guarded so double clicks
 * issue one request).
 */

import { ServiceClient } from "./api.js";
import {
  SessionEvent,
  SessionView,
  canAccept,
  canStop,
  initialView,
  reduce,
} from "./store.js";
import { StreamOptions, StreamSubscription, subscribeFrames } from "./stream.js";

export class SessionController {
  private view: SessionView;
  private subscription: StreamSubscription | null = null;
  private stopInFlight = false;
  private acceptInFlight = false;
  private listeners: Array<(view: SessionView) => void> = [];

  constructor(
    private readonly client: ServiceClient,
    readonly sessionId: string,
    private readonly streamOptions: StreamOptions = {},
  ) {
    this.view = initialView(sessionId);
  }

  get state(): SessionView {
    return this.view;
  }

  onChange(listener: (view: SessionView) => void): void {
    this.listeners.push(listener);
  }

  dispatch(event: SessionEvent): void {
    this.view = reduce(this.view, event);
    for (const listener of this.listeners) {
      listener(this.view);
    }
  }

  /** Load persisted state, then follow the live stream. */
  async connect(): Promise<void> {
    try {
      const detail = await this.client.getSession(this.sessionId);
      this.dispatch({
        type: "snapshot",
        status: detail.status,
        frames: detail.frames,
        decision: detail.decision,
      });
      if (detail.best_index >= 0) {
        this.dispatch({
          type: "end",
          status: detail.status,
          decision: detail.decision,
          bestIndex: detail.best_index,
        });
      }
    } catch (err) {
      if (String(err).includes("404")) {
        this.dispatch({ type: "not-found" });
        return;
      }
      throw err;
    }
    this.subscription = subscribeFrames(
      this.client.streamUrl(this.sessionId),
      (event) => this.dispatch(event),
      this.streamOptions,
    );
  }

  disconnect(): void {
    this.subscription?.close();
    this.subscription = null;
  }

  /** Issue the stop exactly once per session, and only while running. */
  async stop(): Promise<boolean> {
    if (!canStop(this.view) || this.stopInFlight) {
      return false;
    }
    this.stopInFlight = true;
    this.dispatch({ type: "stop-requested" });
    await this.client.stopSession(this.sessionId);
    return true;
  }

  selectFrame(index: number): void {
    this.dispatch({ type: "select", index });
  }

  /** Accept the selected frame (default: best), triggering adapter export. */
  async accept(frameIndex?: number): Promise<number | null> {
    if (!canAccept(this.view) || this.acceptInFlight) {
      return null;
    }
    const index = frameIndex ?? this.view.selectedIndex ?? this.view.bestIndex;
    if (index < 0) {
      return null;
    }
    this.acceptInFlight = true;
    try {
      const response = await this.client.acceptFrame(this.sessionId, index);
      this.dispatch({ type: "accepted", index: response.frame_index });
      return response.frame_index;
    } finally {
      this.acceptInFlight = false;
    }
  }
}
