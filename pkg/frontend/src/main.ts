/** App entry: session list plus the live view for the selected session. */

import { ServiceClient } from "./api.js";
import { SessionController } from "./controller.js";
import { renderView, ViewElements } from "./ui.js";

const client = new ServiceClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let active: SessionController | null = null;

async function openSession(sessionId: string, subjectUrl?: string): Promise<void> {
  active?.disconnect();
  const controller = new SessionController(client, sessionId);
  active = controller;

  const elements: ViewElements = {
    status: el("status"),
    banner: el("banner"),
    gallery: el("gallery"),
    chart: el<HTMLCanvasElement>("chart"),
    compareSubject: el<HTMLImageElement>("compare-subject"),
    compareLatest: el<HTMLImageElement>("compare-latest"),
    stopButton: el<HTMLButtonElement>("stop"),
    acceptButton: el<HTMLButtonElement>("accept"),
    downloadLink: el<HTMLAnchorElement>("download"),
  };
  if (subjectUrl) {
    elements.compareSubject.src = subjectUrl;
  }

  elements.stopButton.onclick = () => void controller.stop();
  elements.acceptButton.onclick = () => void controller.accept();

  controller.onChange((view) =>
    renderView(view, elements, controller, (index) => client.adapterUrl(sessionId, index)),
  );
  await controller.connect();
}

async function refreshSessionList(): Promise<void> {
  const list = el("session-list");
  const sessions = await client.listSessions();
  list.replaceChildren(
    ...sessions.map((session) => {
      const item = document.createElement("li");
      const button = document.createElement("button");
      button.textContent = `${session.session_id} · ${session.status} · ${session.n_frames} frames`;
      button.addEventListener("click", () => void openSession(session.session_id));
      item.append(button);
      return item;
    }),
  );
}

async function createFromForm(): Promise<void> {
  const subjectPath = el<HTMLInputElement>("new-subject").value.trim();
  const classLabel = el<HTMLInputElement>("new-class").value.trim() || "subject";
  if (!subjectPath) return;
  const created = await client.createSession({
    task: "generate",
    backbone: "toy",
    subject_path: subjectPath,
    class_label: classLabel,
    extractors: "stub",
    config: { learning_rate: 0.02, rank: 4, max_iterations: 40 },
  });
  await refreshSessionList();
  await openSession(created.session_id);
}

window.addEventListener("DOMContentLoaded", () => {
  el<HTMLButtonElement>("refresh").onclick = () => void refreshSessionList();
  el<HTMLButtonElement>("create").onclick = () => void createFromForm();
  void refreshSessionList();
});
