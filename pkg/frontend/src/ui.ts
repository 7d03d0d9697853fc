/** DOM rendering for one session view; every render is a pure projection of
 * the store state, so it tracks the event stream exactly. */

import { drawChart } from "./chart.js";
import { SessionController } from "./controller.js";
import {
  SessionView,
  canAccept,
  canStop,
  chartSeries,
  galleryItems,
  latestFrame,
} from "./store.js";

export interface ViewElements {
  status: HTMLElement;
  banner: HTMLElement;
  gallery: HTMLElement;
  chart: HTMLCanvasElement;
  compareSubject: HTMLImageElement;
  compareLatest: HTMLImageElement;
  stopButton: HTMLButtonElement;
  acceptButton: HTMLButtonElement;
  downloadLink: HTMLAnchorElement;
}

export function renderView(
  view: SessionView,
  elements: ViewElements,
  controller: SessionController,
  adapterUrl: (index?: number) => string,
): void {
  elements.status.textContent = view.notFound
    ? `session ${view.sessionId}: not found`
    : `session ${view.sessionId} — ${view.status}` +
      (view.decision ? ` (${view.decision.reason} @ ${view.decision.stop_index})` : "");

  elements.banner.hidden = view.connected || view.notFound;

  const items = galleryItems(view);
  elements.gallery.replaceChildren(
    ...items.map((item) => {
      const cell = document.createElement("figure");
      cell.className =
        "frame" + (item.selected ? " selected" : "") + (item.best ? " best" : "");
      const img = document.createElement("img");
      img.src = item.thumbnailUrl;
      img.alt = `frame ${item.index}`;
      img.loading = "lazy";
      const caption = document.createElement("figcaption");
      caption.textContent = `#${item.index} · ${item.lossTotal.toFixed(4)}`;
      cell.append(img, caption);
      cell.addEventListener("click", () => controller.selectFrame(item.index));
      return cell;
    }),
  );

  drawChart(elements.chart, chartSeries(view));

  const latest = latestFrame(view);
  if (latest) {
    elements.compareLatest.src = latest.image_url;
    elements.compareLatest.alt = `latest frame ${latest.index}`;
  }

  elements.stopButton.disabled = !canStop(view);
  elements.acceptButton.disabled = !canAccept(view);
  const exportIndex =
    view.selectedIndex ?? (view.bestIndex >= 0 ? view.bestIndex : undefined);
  elements.downloadLink.href = adapterUrl(exportIndex);
  elements.downloadLink.textContent =
    exportIndex === undefined ? "download best adapters" : `download adapters (frame ${exportIndex})`;
}
