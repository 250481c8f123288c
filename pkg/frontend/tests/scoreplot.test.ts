import { describe, expect, it } from "vitest";

import { barAt, barGeometry } from "../src/scoreplot.js";

describe("barGeometry", () => {
  const values = [0.0, 0.01, 0.05, 0.11, 0.18, 0.21, 0.27, 0.31];

  it("lays out one bar per value inside the plot area", () => {
    const bars = barGeometry(values, 280, 140);
    expect(bars).toHaveLength(8);
    for (const bar of bars) {
      expect(bar.x).toBeGreaterThanOrEqual(0);
      expect(bar.x + bar.w).toBeLessThanOrEqual(280 + 1e-9);
      expect(bar.h).toBeGreaterThanOrEqual(0);
      expect(bar.y + bar.h).toBeCloseTo(140, 9);
    }
    // Bars are left-to-right in value order and do not overlap.
    for (let i = 1; i < bars.length; i++) {
      expect(bars[i].x).toBeGreaterThan(bars[i - 1].x + bars[i - 1].w);
    }
  });

  it("scales against the largest magnitude", () => {
    const bars = barGeometry(values, 280, 140);
    const tallest = bars[bars.length - 1];
    expect(tallest.h).toBeCloseTo(140 - 4, 9);
    expect(bars[0].h).toBe(0);
    expect(bars[1].h / tallest.h).toBeCloseTo(0.01 / 0.31, 9);
  });

  it("survives all-zero sequences", () => {
    const bars = barGeometry([0, 0, 0], 100, 50);
    for (const bar of bars) {
      expect(Number.isFinite(bar.h)).toBe(true);
      expect(bar.h).toBe(0);
    }
  });

  it("returns nothing for an empty sequence", () => {
    expect(barGeometry([], 100, 50)).toEqual([]);
  });
});

describe("barAt", () => {
  it("hits the bar under the cursor and misses the gaps", () => {
    const bars = barGeometry([1, 2, 3], 100, 50);
    const middle = bars[1];
    expect(barAt(bars, middle.x + middle.w / 2)?.value).toBe(2);
    expect(barAt(bars, middle.x - 1)).toBeNull();
    expect(barAt(bars, -10)).toBeNull();
    expect(barAt([], 10)).toBeNull();
  });
});
