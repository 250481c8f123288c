/** Deterministic categorical coloring for cluster labels.
 *
 * A fixed 20-color wheel, cycled by label, so the same clustering is
 * colored identically across sessions and machines.
 */

export const CLUSTER_COLORS: readonly string[] = [
  "#1f77b4",
  "#ff7f0e",
  "#2ca02c",
  "#d62728",
  "#9467bd",
  "#8c564b",
  "#e377c2",
  "#7f7f7f",
  "#bcbd22",
  "#17becf",
  "#aec7e8",
  "#ffbb78",
  "#98df8a",
  "#ff9896",
  "#c5b0d5",
  "#c49c94",
  "#f7b6d2",
  "#c7c7c7",
  "#dbdb8d",
  "#9edae5",
];

export function clusterColor(label: number): string {
  const n = CLUSTER_COLORS.length;
  return CLUSTER_COLORS[((label % n) + n) % n];
}

/** Blend a hex color toward white; 0 keeps the color, 1 is white.
 * Unselected points are drawn washed out so selected ones read as the
 * more saturated variant of the same hue. */
export function washOut(hex: string, amount: number): string {
  const v = hex.replace("#", "");
  const r = parseInt(v.slice(0, 2), 16);
  const g = parseInt(v.slice(2, 4), 16);
  const b = parseInt(v.slice(4, 6), 16);
  const mix = (c: number) => Math.round(c + (255 - c) * amount);
  const out = [mix(r), mix(g), mix(b)].map((c) => c.toString(16).padStart(2, "0"));
  return `#${out.join("")}`;
}
