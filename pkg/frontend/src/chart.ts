/**
 * Minimal canvas loss chart: log-scale y, step index x, one muted polyline
 * per component and the total highlighted on top.
 */

import type { ChartSeries } from "./store.js";

export interface ChartPoint {
  x: number;
  y: number;
}

export interface ChartLayout {
  total: ChartPoint[];
  components: Record<string, ChartPoint[]>;
  yTicks: Array<{ y: number; label: string }>;
}

const FLOOR = 1e-8; // log-scale floor for zero components

function logValue(value: number): number {
  return Math.log10(Math.max(value, FLOOR));
}

/** Map series into unit-square coordinates (x right, y up). */
export function layoutChart(series: ChartSeries): ChartLayout {
  const steps = series.steps;
  if (steps.length === 0) {
    return { total: [], components: {}, yTicks: [] };
  }
  const values = [...series.total, ...Object.values(series.components).flat()];
  const logs = values.map(logValue);
  let lo = Math.min(...logs);
  let hi = Math.max(...logs);
  if (hi - lo < 1e-9) {
    hi = lo + 1;
  }
  const maxStep = Math.max(steps[steps.length - 1], 1);

  const place = (step: number, value: number): ChartPoint => ({
    x: step / maxStep,
    y: (logValue(value) - lo) / (hi - lo),
  });

  const layout: ChartLayout = {
    total: steps.map((step, i) => place(step, series.total[i])),
    components: {},
    yTicks: [],
  };
  for (const [name, values] of Object.entries(series.components)) {
    layout.components[name] = steps.map((step, i) => place(step, values[i] ?? FLOOR));
  }
  for (let tick = Math.ceil(lo); tick <= Math.floor(hi); tick += 1) {
    layout.yTicks.push({ y: (tick - lo) / (hi - lo), label: `1e${tick}` });
  }
  return layout;
}

const COMPONENT_COLORS = ["#7aa2f7", "#9ece6a", "#e0af68", "#bb9af7"];

export function drawChart(canvas: HTMLCanvasElement, series: ChartSeries): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const layout = layoutChart(series);
  const pad = 28;

  const toCanvas = (p: ChartPoint) => ({
    x: pad + p.x * (width - 2 * pad),
    y: height - pad - p.y * (height - 2 * pad),
  });

  ctx.strokeStyle = "#2a2e3f";
  ctx.fillStyle = "#787c99";
  ctx.font = "10px sans-serif";
  for (const tick of layout.yTicks) {
    const y = height - pad - tick.y * (height - 2 * pad);
    ctx.beginPath();
    ctx.moveTo(pad, y);
    ctx.lineTo(width - pad, y);
    ctx.stroke();
    ctx.fillText(tick.label, 2, y + 3);
  }

  const drawLine = (points: ChartPoint[], color: string, lineWidth: number) => {
    if (points.length === 0) return;
    ctx.strokeStyle = color;
    ctx.lineWidth = lineWidth;
    ctx.beginPath();
    points.forEach((p, i) => {
      const c = toCanvas(p);
      if (i === 0) ctx.moveTo(c.x, c.y);
      else ctx.lineTo(c.x, c.y);
    });
    ctx.stroke();
  };

  Object.values(layout.components).forEach((points, i) => {
    drawLine(points, COMPONENT_COLORS[i % COMPONENT_COLORS.length], 1);
  });
  drawLine(layout.total, "#f7768e", 2);
}
