/** Auxiliary score plot: the embedding's eigenvalue sequence as bars.
 *
 * Shown only when the active embedding carries eigenvalues; hovering a
 * bar reveals its numeric value.
 */

export interface Bar {
  x: number;
  y: number;
  w: number;
  h: number;
  value: number;
}

/** Bar rectangles for a width x height plot area; values are plotted
 * against the sequence maximum so tiny eigenvalues stay visible. */
export function barGeometry(values: readonly number[], width: number, height: number): Bar[] {
  if (values.length === 0) return [];
  const peak = Math.max(...values.map((v) => Math.abs(v)), 1e-12);
  const gap = 2;
  const w = (width - gap * (values.length + 1)) / values.length;
  return values.map((value, i) => {
    const h = (Math.abs(value) / peak) * (height - 4);
    return { x: gap + i * (w + gap), y: height - h, w, h, value };
  });
}

export function barAt(bars: readonly Bar[], x: number): Bar | null {
  for (const bar of bars) {
    if (x >= bar.x && x <= bar.x + bar.w) return bar;
  }
  return null;
}

export class ScorePlot {
  private bars: Bar[] = [];

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly caption: HTMLElement,
  ) {
    canvas.addEventListener("pointermove", (e) => {
      const rect = canvas.getBoundingClientRect();
      const bar = barAt(this.bars, e.clientX - rect.left);
      this.caption.textContent = bar ? bar.value.toPrecision(6) : "";
    });
    canvas.addEventListener("pointerleave", () => {
      this.caption.textContent = "";
    });
  }

  /** Hide the plot entirely when the embedding has no score sequence. */
  update(values: number[] | null): void {
    const wrapper = this.canvas.parentElement;
    if (wrapper) wrapper.style.display = values ? "" : "none";
    if (!values) {
      this.bars = [];
      return;
    }
    this.bars = barGeometry(values, this.canvas.width, this.canvas.height);
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.fillStyle = "#4878a8";
    for (const bar of this.bars) ctx.fillRect(bar.x, bar.y, bar.w, bar.h);
  }
}
