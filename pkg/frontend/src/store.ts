/** Application store: the single owner of view state and fetched data.
 *
 * DOM-free by design — components subscribe and render from snapshots,
 * tests drive it with a stubbed fetch. In-flight loads are sequenced so
 * a stale response can never overwrite a newer selection's data.
 */

import {
  ApiClient,
  ClusteringResponse,
  EmbeddingResponse,
  ProjectDetail,
  ProjectSummary,
  Sequenced,
} from "./api.js";
import {
  Mode,
  Selection,
  decodeSelection,
  encodeSelection,
  initialSelection,
  selectionForAnalysis,
  selectionToFragment,
  validateSelection,
} from "./state.js";

export interface ClusterRow {
  label: number;
  count: number;
  /** Display text for the cluster list: name plus member count. */
  text: string;
}

export interface Thumbnail {
  sampleIndex: number;
  url: string;
}

export interface StoreSnapshot {
  projects: ProjectSummary[];
  projectId: number;
  detail: ProjectDetail | null;
  selection: Selection;
  points: [number, number][];
  indices: number[];
  eigenvalues: number[] | null;
  labels: number[];
  clusterRows: ClusterRow[];
  /** Local (category-relative) offsets of selected points. */
  selectedLocal: number[];
  thumbnails: Thumbnail[];
  hoverUrl: string | null;
  banner: string | null;
  loading: boolean;
}

const EMPTY_SELECTION: Selection = {
  project: "",
  analysis: "",
  category: "",
  clustering: "",
  embedding: "",
  colormap: "",
  mode: "input",
  selected_indices: [],
};

export class Store {
  private projects: ProjectSummary[] = [];
  private projectId = -1;
  private detail: ProjectDetail | null = null;
  private selection: Selection = EMPTY_SELECTION;
  private embedding: EmbeddingResponse = { points: [], indices: [] };
  private clustering: ClusteringResponse = { labels: [], cluster_sizes: {} };
  private hover: number | null = null;
  private banner: string | null = null;
  private loading = false;
  private readonly sequenced = new Sequenced();
  private readonly listeners = new Set<(snap: StoreSnapshot) => void>();

  constructor(private readonly api: ApiClient) {}

  subscribe(listener: (snap: StoreSnapshot) => void): () => void {
    this.listeners.add(listener);
    listener(this.snapshot());
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const listener of this.listeners) listener(snap);
  }

  private fail(e: unknown): void {
    this.banner = e instanceof Error ? e.message : String(e);
    this.loading = false;
    this.emit();
  }

  dismissBanner(): void {
    this.banner = null;
    this.emit();
  }

  /** Load the project list and open the first project (or the one named
   * by an imported selection). */
  async start(imported?: Selection): Promise<void> {
    try {
      this.projects = await this.api.projects();
    } catch (e) {
      this.fail(e);
      return;
    }
    if (this.projects.length === 0) {
      this.fail(new Error("no projects loaded"));
      return;
    }
    if (imported) {
      const match = this.projects.find((p) => p.project_name === imported.project);
      await this.openProject(match ? match.id : this.projects[0].id, imported);
    } else {
      await this.openProject(this.projects[0].id);
    }
  }

  async openProject(id: number, restore?: Selection): Promise<void> {
    this.loading = true;
    this.emit();
    let detail: ProjectDetail;
    try {
      detail = await this.api.projectDetail(id);
    } catch (e) {
      this.fail(e);
      return;
    }
    this.projectId = id;
    this.detail = detail;
    const name = this.projects.find((p) => p.id === id)?.project_name ?? String(id);
    this.selection = restore ?? initialSelection(name, detail);
    await this.reload();
  }

  /** Refetch embedding and clustering for the current selection. */
  private async reload(): Promise<void> {
    const sel = this.selection;
    this.loading = true;
    this.emit();
    const result = await this.sequenced
      .run(() =>
        Promise.all([
          this.api.embedding(this.projectId, sel.analysis, sel.category, sel.embedding),
          this.api.clustering(this.projectId, sel.analysis, sel.category, sel.clustering),
        ]),
      )
      .catch((e) => {
        this.fail(e);
        return undefined;
      });
    if (!result) return; // stale or failed: a newer load owns the state
    [this.embedding, this.clustering] = result;
    this.loading = false;
    this.emit();
  }

  setAnalysis(analysis: string): void {
    if (!this.detail) return;
    this.selection = selectionForAnalysis(this.selection, this.detail, analysis);
    void this.reload();
  }

  setCategory(category: string): void {
    this.selection = { ...this.selection, category, selected_indices: [] };
    void this.reload();
  }

  setClustering(clustering: string): void {
    this.selection = { ...this.selection, clustering };
    void this.reload();
  }

  setEmbedding(embedding: string): void {
    this.selection = { ...this.selection, embedding };
    void this.reload();
  }

  /** Mode and colormap only change how images are rendered; data stays. */
  setMode(mode: Mode): void {
    this.selection = { ...this.selection, mode };
    this.emit();
  }

  setColormap(colormap: string): void {
    this.selection = { ...this.selection, colormap };
    this.emit();
  }

  /** Selection from the canvas arrives as local point offsets. */
  setSelectedLocal(local: number[]): void {
    const indices = local
      .map((i) => this.embedding.indices[i])
      .filter((i): i is number => i !== undefined)
      .sort((a, b) => a - b);
    this.selection = { ...this.selection, selected_indices: indices };
    this.emit();
  }

  /** Select every member of one cluster (the cluster-list shortcut). */
  selectCluster(label: number): void {
    const local = this.clustering.labels
      .map((l, i) => (l === label ? i : -1))
      .filter((i) => i >= 0);
    this.setSelectedLocal(local);
  }

  setHover(local: number | null): void {
    this.hover = local;
    this.emit();
  }

  exportSelection(): string {
    return encodeSelection(this.selection);
  }

  /** Import replaces the selection only if the document validates. */
  async importSelection(text: string): Promise<void> {
    let incoming: Selection;
    try {
      incoming = decodeSelection(text);
    } catch (e) {
      this.fail(e);
      return;
    }
    const match = this.projects.find((p) => p.project_name === incoming.project);
    await this.openProject(match ? match.id : this.projectId, incoming);
  }

  shareFragment(): string {
    return selectionToFragment(validateSelection({ ...this.selection }));
  }

  snapshot(): StoreSnapshot {
    const indexOfSample = new Map(this.embedding.indices.map((s, i) => [s, i]));
    const selectedLocal = this.selection.selected_indices
      .map((s) => indexOfSample.get(s))
      .filter((i): i is number => i !== undefined);
    const clusterRows: ClusterRow[] = Object.entries(this.clustering.cluster_sizes)
      .map(([label, count]) => ({ label: Number(label), count }))
      .sort((a, b) => a.label - b.label)
      .map(({ label, count }) => ({ label, count, text: `cluster ${label} (${count})` }));
    const thumbnails: Thumbnail[] = this.selection.selected_indices.map((sampleIndex) => ({
      sampleIndex,
      url: this.api.sampleImageUrl(
        this.projectId,
        sampleIndex,
        this.selection.mode,
        this.selection.colormap,
      ),
    }));
    const hoverSample = this.hover === null ? undefined : this.embedding.indices[this.hover];
    return {
      projects: this.projects,
      projectId: this.projectId,
      detail: this.detail,
      selection: { ...this.selection, selected_indices: [...this.selection.selected_indices] },
      points: this.embedding.points,
      indices: this.embedding.indices,
      eigenvalues: this.embedding.eigenvalues ?? null,
      labels: this.clustering.labels,
      clusterRows,
      selectedLocal,
      thumbnails,
      hoverUrl:
        hoverSample === undefined
          ? null
          : this.api.sampleImageUrl(this.projectId, hoverSample, "input", this.selection.colormap),
      banner: this.banner,
      loading: this.loading,
    };
  }
}
