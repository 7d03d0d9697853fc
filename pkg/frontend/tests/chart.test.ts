import { describe, expect, it } from "vitest";

import { layoutChart } from "../src/chart.js";

describe("layoutChart", () => {
  it("maps ten steps to ten ordered points with x = step index", () => {
    const steps = Array.from({ length: 10 }, (_, i) => i);
    const layout = layoutChart({
      steps,
      total: steps.map((i) => 1 / (i + 1)),
      components: { sim_dino: steps.map((i) => 0.5 / (i + 1)) },
    });
    expect(layout.total).toHaveLength(10);
    const xs = layout.total.map((p) => p.x);
    expect(xs).toEqual([...xs].sort((a, b) => a - b));
    expect(xs[0]).toBe(0);
    expect(xs[9]).toBe(1);
    expect(layout.components.sim_dino).toHaveLength(10);
  });

  it("log scale: a decade of loss is a constant vertical distance", () => {
    const layout = layoutChart({
      steps: [0, 1, 2],
      total: [1, 0.1, 0.01],
      components: {},
    });
    const [a, b, c] = layout.total.map((p) => p.y);
    expect(a - b).toBeCloseTo(b - c, 10);
    expect(layout.yTicks.length).toBeGreaterThanOrEqual(2);
  });

  it("zero-valued components survive the log floor", () => {
    const layout = layoutChart({
      steps: [0, 1],
      total: [1, 0.5],
      components: { bg: [0, 0] },
    });
    for (const point of layout.components.bg) {
      expect(Number.isFinite(point.y)).toBe(true);
    }
  });

  it("empty series yields an empty layout", () => {
    const layout = layoutChart({ steps: [], total: [], components: {} });
    expect(layout.total).toEqual([]);
    expect(layout.yTicks).toEqual([]);
  });
});
