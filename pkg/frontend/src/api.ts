/** Thin typed client for the session service HTTP API. */

import type { FrameSummary, SessionStatus, StopDecision } from "./store.js";

export interface SessionSummary {
  session_id: string;
  status: SessionStatus;
  backbone_id: string;
  n_frames: number;
  best_index: number;
  decision: StopDecision | null;
  accepted_index: number | null;
  error: string | null;
}

export interface SessionDetail extends SessionSummary {
  frames: FrameSummary[];
}

export interface StopResponse {
  acknowledged: boolean;
  already_terminal: boolean;
  status: string;
  decision?: StopDecision | null;
}

export interface AcceptResponse {
  status: string;
  frame_index: number;
  checkpoint: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      const body = await response.text();
      throw new Error(`${init?.method ?? "GET"} ${path} -> ${response.status}: ${body}`);
    }
    return (await response.json()) as T;
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.request<SessionSummary[]>("/sessions");
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return this.request<SessionDetail>(`/sessions/${sessionId}`);
  }

  createSession(spec: Record<string, unknown>): Promise<{ session_id: string; status: string }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(spec),
    });
  }

  stopSession(sessionId: string): Promise<StopResponse> {
    return this.request<StopResponse>(`/sessions/${sessionId}/stop`, { method: "POST" });
  }

  acceptFrame(sessionId: string, frameIndex: number): Promise<AcceptResponse> {
    return this.request<AcceptResponse>(`/sessions/${sessionId}/accept`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ frame_index: frameIndex }),
    });
  }

  adapterUrl(sessionId: string, frameIndex?: number): string {
    const suffix = frameIndex === undefined ? "" : `?frame_index=${frameIndex}`;
    return `${this.baseUrl}/sessions/${sessionId}/adapter${suffix}`;
  }

  streamUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/frames`;
  }
}
