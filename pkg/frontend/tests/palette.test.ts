import { describe, expect, it } from "vitest";

import { CLUSTER_COLORS, clusterColor, washOut } from "../src/palette.js";

describe("cluster palette", () => {
  it("has 20 distinct colors", () => {
    expect(CLUSTER_COLORS).toHaveLength(20);
    expect(new Set(CLUSTER_COLORS).size).toBe(20);
    for (const c of CLUSTER_COLORS) expect(c).toMatch(/^#[0-9a-f]{6}$/);
  });

  it("cycles labels past the palette length", () => {
    expect(clusterColor(0)).toBe(CLUSTER_COLORS[0]);
    expect(clusterColor(19)).toBe(CLUSTER_COLORS[19]);
    expect(clusterColor(20)).toBe(CLUSTER_COLORS[0]);
    expect(clusterColor(47)).toBe(CLUSTER_COLORS[7]);
  });

  it("maps negative labels into the palette", () => {
    expect(clusterColor(-1)).toBe(CLUSTER_COLORS[19]);
    expect(clusterColor(-20)).toBe(CLUSTER_COLORS[0]);
  });
});

describe("washOut", () => {
  it("keeps the color at amount 0 and reaches white at 1", () => {
    expect(washOut("#1f77b4", 0)).toBe("#1f77b4");
    expect(washOut("#000000", 1)).toBe("#ffffff");
  });

  it("moves every channel toward white", () => {
    const washed = washOut("#1f77b4", 0.75);
    const channels = (hex: string) =>
      [1, 3, 5].map((i) => parseInt(hex.slice(i, i + 2), 16));
    const before = channels("#1f77b4");
    const after = channels(washed);
    for (let i = 0; i < 3; i++) {
      expect(after[i]).toBeGreaterThan(before[i]);
      expect(after[i]).toBeLessThanOrEqual(255);
    }
  });
});
