/** Embedding scatter: pure view geometry plus a thin canvas shell.
 *
 * Everything coordinate-related (fit, zoom, pan, hit-testing, rectangle
 * and lasso selection, the per-point render model) is pure and tested
 * headlessly; the ScatterCanvas class only wires DOM events to it.
 */

import { clusterColor, washOut } from "./palette.js";

export type Point = readonly [number, number];

export interface Transform {
  scale: number;
  tx: number;
  ty: number;
}

export function applyTransform(t: Transform, p: Point): [number, number] {
  return [p[0] * t.scale + t.tx, p[1] * t.scale + t.ty];
}

export function invertTransform(t: Transform, sx: number, sy: number): [number, number] {
  return [(sx - t.tx) / t.scale, (sy - t.ty) / t.scale];
}

/** Center the point cloud in a width x height viewport with padding. */
export function fitTransform(
  points: readonly Point[],
  width: number,
  height: number,
  pad = 24,
): Transform {
  if (points.length === 0) return { scale: 1, tx: width / 2, ty: height / 2 };
  let xMin = Infinity;
  let xMax = -Infinity;
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const [x, y] of points) {
    xMin = Math.min(xMin, x);
    xMax = Math.max(xMax, x);
    yMin = Math.min(yMin, y);
    yMax = Math.max(yMax, y);
  }
  const spanX = xMax - xMin || 1;
  const spanY = yMax - yMin || 1;
  const scale = Math.min((width - 2 * pad) / spanX, (height - 2 * pad) / spanY);
  return {
    scale,
    tx: width / 2 - scale * (xMin + xMax) / 2,
    ty: height / 2 - scale * (yMin + yMax) / 2,
  };
}

/** Zoom by a factor while keeping the screen point (sx, sy) fixed. */
export function zoomAt(t: Transform, sx: number, sy: number, factor: number): Transform {
  const scale = t.scale * factor;
  return {
    scale,
    tx: sx - (sx - t.tx) * factor,
    ty: sy - (sy - t.ty) * factor,
  };
}

export function pan(t: Transform, dx: number, dy: number): Transform {
  return { scale: t.scale, tx: t.tx + dx, ty: t.ty + dy };
}

/** Uniform-cell spatial index over screen-space positions. */
export class SpatialGrid {
  private cells = new Map<string, number[]>();

  constructor(
    private readonly positions: readonly Point[],
    private readonly cell: number,
  ) {
    positions.forEach(([x, y], i) => {
      const key = this.key(x, y);
      const bucket = this.cells.get(key);
      if (bucket) bucket.push(i);
      else this.cells.set(key, [i]);
    });
  }

  private key(x: number, y: number): string {
    return `${Math.floor(x / this.cell)}:${Math.floor(y / this.cell)}`;
  }

  /** Index of the nearest point within radius, or null. */
  nearest(x: number, y: number, radius: number): number | null {
    const r = Math.ceil(radius / this.cell);
    const cx = Math.floor(x / this.cell);
    const cy = Math.floor(y / this.cell);
    let best: number | null = null;
    let bestD = radius * radius;
    for (let gx = cx - r; gx <= cx + r; gx++) {
      for (let gy = cy - r; gy <= cy + r; gy++) {
        const bucket = this.cells.get(`${gx}:${gy}`);
        if (!bucket) continue;
        for (const i of bucket) {
          const [px, py] = this.positions[i];
          const d = (px - x) ** 2 + (py - y) ** 2;
          if (d <= bestD) {
            bestD = d;
            best = i;
          }
        }
      }
    }
    return best;
  }
}

export interface Rect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export function pointsInRect(positions: readonly Point[], rect: Rect): number[] {
  const xLo = Math.min(rect.x0, rect.x1);
  const xHi = Math.max(rect.x0, rect.x1);
  const yLo = Math.min(rect.y0, rect.y1);
  const yHi = Math.max(rect.y0, rect.y1);
  const hits: number[] = [];
  positions.forEach(([x, y], i) => {
    if (x >= xLo && x <= xHi && y >= yLo && y <= yHi) hits.push(i);
  });
  return hits;
}

/** Ray-casting point-in-polygon; the lasso polygon is implicitly closed. */
export function pointInPolygon(poly: readonly Point[], x: number, y: number): boolean {
  let inside = false;
  for (let i = 0, j = poly.length - 1; i < poly.length; j = i++) {
    const [xi, yi] = poly[i];
    const [xj, yj] = poly[j];
    const crosses = yi > y !== yj > y && x < ((xj - xi) * (y - yi)) / (yj - yi) + xi;
    if (crosses) inside = !inside;
  }
  return inside;
}

export function pointsInPolygon(positions: readonly Point[], poly: readonly Point[]): number[] {
  if (poly.length < 3) return [];
  const hits: number[] = [];
  positions.forEach(([x, y], i) => {
    if (pointInPolygon(poly, x, y)) hits.push(i);
  });
  return hits;
}

export interface RenderedPoint {
  index: number;
  x: number;
  y: number;
  radius: number;
  color: string;
  selected: boolean;
}

/** Screen-space draw list: every point, colored by cluster label, with
 * unselected points washed out whenever a selection exists. */
export function renderModel(
  points: readonly Point[],
  labels: readonly number[],
  selected: ReadonlySet<number>,
  transform: Transform,
): RenderedPoint[] {
  const anySelected = selected.size > 0;
  return points.map((p, i) => {
    const [x, y] = applyTransform(transform, p);
    const isSelected = selected.has(i);
    const base = clusterColor(labels[i] ?? 0);
    return {
      index: i,
      x,
      y,
      radius: isSelected ? 5 : 3.5,
      color: anySelected && !isSelected ? washOut(base, 0.75) : base,
      selected: isSelected,
    };
  });
}

export interface ScatterCallbacks {
  /** Positions are local (category-relative) point offsets. */
  onSelect(localIndices: number[]): void;
  onHover(localIndex: number | null): void;
}

type DragKind = "pan" | "rect" | "lasso";

/** Canvas shell: draws the render model and translates pointer/wheel
 * gestures into transform updates and selection callbacks.
 *
 * Wheel zooms at the cursor; drag pans; Shift+drag selects a rectangle;
 * Alt/Ctrl+drag draws a lasso; click toggles the point under the
 * cursor; click on empty space clears the selection.
 */
export class ScatterCanvas {
  private transform: Transform = { scale: 1, tx: 0, ty: 0 };
  private points: Point[] = [];
  private labels: number[] = [];
  private selected = new Set<number>();
  private grid: SpatialGrid | null = null;
  private drag: { kind: DragKind; path: Point[]; moved: boolean } | null = null;
  private hover: number | null = null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly callbacks: ScatterCallbacks,
  ) {
    canvas.addEventListener("wheel", (e) => this.onWheel(e), { passive: false });
    canvas.addEventListener("pointerdown", (e) => this.onDown(e));
    canvas.addEventListener("pointermove", (e) => this.onMove(e));
    canvas.addEventListener("pointerup", (e) => this.onUp(e));
    canvas.addEventListener("pointerleave", () => this.setHover(null));
  }

  setData(points: Point[], labels: number[], selected: Iterable<number>): void {
    const refit = points.length !== this.points.length;
    this.points = points;
    this.labels = labels;
    this.selected = new Set(selected);
    if (refit) {
      this.transform = fitTransform(points, this.canvas.width, this.canvas.height);
    }
    this.rebuildGrid();
    this.draw();
  }

  setSelected(selected: Iterable<number>): void {
    this.selected = new Set(selected);
    this.draw();
  }

  resetView(): void {
    this.transform = fitTransform(this.points, this.canvas.width, this.canvas.height);
    this.rebuildGrid();
    this.draw();
  }

  private screenPositions(): Point[] {
    return this.points.map((p) => applyTransform(this.transform, p));
  }

  private rebuildGrid(): void {
    this.grid = new SpatialGrid(this.screenPositions(), 32);
  }

  private local(e: MouseEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return [e.clientX - rect.left, e.clientY - rect.top];
  }

  private onWheel(e: WheelEvent): void {
    e.preventDefault();
    const [x, y] = this.local(e);
    const factor = Math.exp(-e.deltaY * 0.0015);
    this.transform = zoomAt(this.transform, x, y, factor);
    this.rebuildGrid();
    this.draw();
  }

  private onDown(e: PointerEvent): void {
    this.canvas.setPointerCapture(e.pointerId);
    const kind: DragKind = e.shiftKey ? "rect" : e.altKey || e.ctrlKey ? "lasso" : "pan";
    this.drag = { kind, path: [this.local(e)], moved: false };
  }

  private onMove(e: PointerEvent): void {
    const pos = this.local(e);
    if (!this.drag) {
      this.setHover(this.grid ? this.grid.nearest(pos[0], pos[1], 8) : null);
      return;
    }
    const prev = this.drag.path[this.drag.path.length - 1];
    if (Math.abs(pos[0] - prev[0]) + Math.abs(pos[1] - prev[1]) > 2) this.drag.moved = true;
    if (this.drag.kind === "pan") {
      this.transform = pan(this.transform, pos[0] - prev[0], pos[1] - prev[1]);
      this.drag.path = [pos];
      this.rebuildGrid();
    } else {
      this.drag.path.push(pos);
    }
    this.draw();
  }

  private onUp(e: PointerEvent): void {
    const drag = this.drag;
    this.drag = null;
    if (!drag) return;
    const pos = this.local(e);
    const positions = this.screenPositions();
    if (!drag.moved) {
      const hit = this.grid ? this.grid.nearest(pos[0], pos[1], 8) : null;
      if (hit === null) {
        this.callbacks.onSelect([]);
      } else {
        const next = new Set(this.selected);
        if (next.has(hit)) next.delete(hit);
        else next.add(hit);
        this.callbacks.onSelect([...next].sort((a, b) => a - b));
      }
    } else if (drag.kind === "rect") {
      const [x0, y0] = drag.path[0];
      this.callbacks.onSelect(pointsInRect(positions, { x0, y0, x1: pos[0], y1: pos[1] }));
    } else if (drag.kind === "lasso") {
      this.callbacks.onSelect(pointsInPolygon(positions, drag.path));
    }
    this.draw();
  }

  private setHover(index: number | null): void {
    if (index === this.hover) return;
    this.hover = index;
    this.callbacks.onHover(index);
    this.draw();
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    for (const p of renderModel(this.points, this.labels, this.selected, this.transform)) {
      ctx.beginPath();
      ctx.arc(p.x, p.y, p.radius, 0, Math.PI * 2);
      ctx.fillStyle = p.color;
      ctx.fill();
      if (p.index === this.hover) {
        ctx.strokeStyle = "#111111";
        ctx.lineWidth = 1.5;
        ctx.stroke();
      }
    }
    if (this.drag && this.drag.kind !== "pan" && this.drag.path.length > 1) {
      ctx.strokeStyle = "#333333";
      ctx.setLineDash([4, 3]);
      ctx.beginPath();
      if (this.drag.kind === "rect") {
        const [x0, y0] = this.drag.path[0];
        const [x1, y1] = this.drag.path[this.drag.path.length - 1];
        ctx.strokeRect(Math.min(x0, x1), Math.min(y0, y1), Math.abs(x1 - x0), Math.abs(y1 - y0));
      } else {
        ctx.moveTo(this.drag.path[0][0], this.drag.path[0][1]);
        for (const [x, y] of this.drag.path) ctx.lineTo(x, y);
      }
      ctx.stroke();
      ctx.setLineDash([]);
    }
  }
}
