/** Selector panel: project tabs, analysis/category/clustering/embedding
 * selects, colormap select with a low-to-high color bar, mode toggle,
 * cluster list, and the import/export/share buttons.
 */

import { clusterColor } from "./palette.js";
import { Mode } from "./state.js";
import { Store, StoreSnapshot } from "./store.js";

function option(value: string, selected: boolean): HTMLOptionElement {
  const el = document.createElement("option");
  el.value = value;
  el.textContent = value;
  el.selected = selected;
  return el;
}

function fillSelect(select: HTMLSelectElement, values: string[], current: string): void {
  select.replaceChildren(...values.map((v) => option(v, v === current)));
}

export class Controls {
  private readonly projectTabs: HTMLElement;
  private readonly analysis: HTMLSelectElement;
  private readonly category: HTMLSelectElement;
  private readonly clustering: HTMLSelectElement;
  private readonly embedding: HTMLSelectElement;
  private readonly colormap: HTMLSelectElement;
  private readonly colorBar: HTMLCanvasElement;
  private readonly modeGroup: HTMLElement;
  private readonly clusterList: HTMLElement;

  constructor(
    root: HTMLElement,
    private readonly store: Store,
  ) {
    this.projectTabs = root.querySelector("#project-tabs") as HTMLElement;
    this.analysis = root.querySelector("#select-analysis") as HTMLSelectElement;
    this.category = root.querySelector("#select-category") as HTMLSelectElement;
    this.clustering = root.querySelector("#select-clustering") as HTMLSelectElement;
    this.embedding = root.querySelector("#select-embedding") as HTMLSelectElement;
    this.colormap = root.querySelector("#select-colormap") as HTMLSelectElement;
    this.colorBar = root.querySelector("#color-bar") as HTMLCanvasElement;
    this.modeGroup = root.querySelector("#mode-group") as HTMLElement;
    this.clusterList = root.querySelector("#cluster-list") as HTMLElement;

    this.analysis.addEventListener("change", () => store.setAnalysis(this.analysis.value));
    this.category.addEventListener("change", () => store.setCategory(this.category.value));
    this.clustering.addEventListener("change", () => store.setClustering(this.clustering.value));
    this.embedding.addEventListener("change", () => store.setEmbedding(this.embedding.value));
    this.colormap.addEventListener("change", () => store.setColormap(this.colormap.value));

    const exportBtn = root.querySelector("#btn-export") as HTMLButtonElement;
    const importInput = root.querySelector("#import-file") as HTMLInputElement;
    const shareBtn = root.querySelector("#btn-share") as HTMLButtonElement;
    exportBtn.addEventListener("click", () => this.download());
    importInput.addEventListener("change", () => void this.importFile(importInput));
    shareBtn.addEventListener("click", () => void this.share());
  }

  private download(): void {
    const blob = new Blob([this.store.exportSelection()], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "selection.json";
    a.click();
    URL.revokeObjectURL(a.href);
  }

  private async importFile(input: HTMLInputElement): Promise<void> {
    const file = input.files?.[0];
    if (!file) return;
    const text = await file.text();
    input.value = "";
    await this.store.importSelection(text);
  }

  private async share(): Promise<void> {
    const url = new URL(window.location.href);
    url.hash = this.store.shareFragment();
    window.history.replaceState(null, "", url);
    try {
      await navigator.clipboard.writeText(url.toString());
    } catch {
      /* clipboard may be unavailable; the address bar already has it */
    }
  }

  private drawColorBar(colormap: string): void {
    const ctx = this.colorBar.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.colorBar;
    // Sample the server's own rendering of a low-to-high ramp? The bar
    // only indicates direction, so a neutral gradient per family is
    // enough: dark left (low) to bright right (high).
    const ramp = ctx.createLinearGradient(0, 0, width, 0);
    if (colormap === "coldnhot") {
      ramp.addColorStop(0, "#0000ff");
      ramp.addColorStop(0.5, "#000000");
      ramp.addColorStop(0.75, "#ff0000");
      ramp.addColorStop(1, "#ffff00");
    } else if (colormap === "hot") {
      ramp.addColorStop(0, "#000000");
      ramp.addColorStop(0.4, "#ff0000");
      ramp.addColorStop(0.8, "#ffff00");
      ramp.addColorStop(1, "#ffffff");
    } else {
      ramp.addColorStop(0, "#000000");
      ramp.addColorStop(1, "#ffffff");
    }
    ctx.fillStyle = ramp;
    ctx.fillRect(0, 0, width, height);
  }

  render(snap: StoreSnapshot): void {
    this.projectTabs.replaceChildren(
      ...snap.projects.map((p) => {
        const tab = document.createElement("button");
        tab.textContent = p.project_name;
        tab.className = p.id === snap.projectId ? "tab active" : "tab";
        tab.addEventListener("click", () => void this.store.openProject(p.id));
        return tab;
      }),
    );
    const detail = snap.detail;
    if (!detail) return;
    fillSelect(this.analysis, detail.analyses, snap.selection.analysis);
    fillSelect(this.category, detail.categories, snap.selection.category);
    fillSelect(this.clustering, detail.clusterings, snap.selection.clustering);
    fillSelect(this.embedding, detail.embeddings, snap.selection.embedding);
    fillSelect(this.colormap, detail.colormaps, snap.selection.colormap);
    this.drawColorBar(snap.selection.colormap);

    this.modeGroup.replaceChildren(
      ...detail.modes.map((mode) => {
        const btn = document.createElement("button");
        btn.textContent = mode;
        btn.className = mode === snap.selection.mode ? "mode active" : "mode";
        btn.addEventListener("click", () => this.store.setMode(mode as Mode));
        return btn;
      }),
    );

    this.clusterList.replaceChildren(
      ...snap.clusterRows.map((row) => {
        const item = document.createElement("button");
        item.textContent = row.text;
        item.className = "cluster-row";
        item.style.borderLeftColor = clusterColor(row.label);
        item.addEventListener("click", () => this.store.selectCluster(row.label));
        return item;
      }),
    );
  }
}
