/** Application entry point: wires the store to the DOM widgets. */

import { ApiClient } from "./api.js";
import { Controls } from "./controls.js";
import { ScatterCanvas } from "./scatter.js";
import { ScorePlot } from "./scoreplot.js";
import { Selection, selectionFromFragment } from "./state.js";
import { Store } from "./store.js";
import { SampleStrip } from "./strip.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function restoreFromUrl(): Selection | undefined {
  if (!window.location.hash) return undefined;
  try {
    return selectionFromFragment(window.location.hash);
  } catch {
    return undefined;
  }
}

function main(): void {
  const apiBase = new URLSearchParams(window.location.search).get("api") ?? "";
  const store = new Store(new ApiClient(apiBase));

  const controls = new Controls(document.body, store);
  const scatter = new ScatterCanvas(el<HTMLCanvasElement>("embedding-canvas"), {
    onSelect: (local) => store.setSelectedLocal(local),
    onHover: (local) => store.setHover(local),
  });
  const scores = new ScorePlot(
    el<HTMLCanvasElement>("score-canvas"),
    el<HTMLElement>("score-caption"),
  );
  const strip = new SampleStrip(
    el<HTMLElement>("sample-strip"),
    el<HTMLImageElement>("hover-preview"),
  );
  const banner = el<HTMLElement>("banner");
  el<HTMLElement>("banner-close").addEventListener("click", () =>
    store.dismissBanner(),
  );
  el<HTMLElement>("btn-reset-view").addEventListener("click", () =>
    scatter.resetView(),
  );

  store.subscribe((snap) => {
    controls.render(snap);
    scatter.setData(snap.points, snap.labels, new Set(snap.selectedLocal));
    scores.update(snap.eigenvalues);
    strip.render(snap);
    banner.textContent = snap.banner ?? "";
    banner.parentElement!.style.display = snap.banner ? "" : "none";
    document.body.classList.toggle("loading", snap.loading);
  });

  void store.start(restoreFromUrl());
}

main();
