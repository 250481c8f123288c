/** Typed client for the project-explorer HTTP API.
 *
 * All endpoints are read-only GETs plus one validation POST; the client
 * never caches, so repeated calls observe the server's own guarantees.
 */

export interface ProjectSummary {
  id: number;
  project_name: string;
  model_name: string;
  dataset_name: string;
}

export interface ProjectDetail {
  analyses: string[];
  categories: string[];
  clusterings: string[];
  embeddings: string[];
  colormaps: string[];
  modes: string[];
}

export interface EmbeddingResponse {
  points: [number, number][];
  indices: number[];
  eigenvalues?: number[];
}

export interface ClusteringResponse {
  labels: number[];
  cluster_sizes: Record<string, number>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

interface ResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (url: string) => Promise<ResponseLike>;

const defaultFetch: FetchLike = (url) => fetch(url);

export class ApiClient {
  constructor(
    readonly base: string = "",
    private readonly fetchFn: FetchLike = defaultFetch,
  ) {}

  projects(): Promise<ProjectSummary[]> {
    return this.get<ProjectSummary[]>("/api/projects");
  }

  projectDetail(id: number): Promise<ProjectDetail> {
    return this.get<ProjectDetail>(`/api/projects/${id}`);
  }

  embedding(
    id: number,
    analysis: string,
    category: string,
    method: string,
  ): Promise<EmbeddingResponse> {
    const q = new URLSearchParams({ analysis, category, method });
    return this.get<EmbeddingResponse>(`/api/projects/${id}/embedding?${q}`);
  }

  clustering(
    id: number,
    analysis: string,
    category: string,
    name: string,
  ): Promise<ClusteringResponse> {
    const q = new URLSearchParams({ analysis, category, name });
    return this.get<ClusteringResponse>(`/api/projects/${id}/clustering?${q}`);
  }

  /** URL of a rendered sample image; the browser fetches it lazily. */
  sampleImageUrl(id: number, index: number, mode: string, colormap: string): string {
    const q = new URLSearchParams({ mode, colormap });
    return `${this.base}/api/projects/${id}/sample/${index}/image?${q}`;
  }

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.base + path);
    if (!res.ok) {
      let detail = `HTTP ${res.status}`;
      try {
        const body = (await res.json()) as { error?: string };
        if (body && typeof body.error === "string") detail = body.error;
      } catch {
        /* non-JSON error body; keep the status text */
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }
}

/** Serializes async work per slot and discards stale completions.
 *
 * Every call bumps a sequence number; when a task finishes it only
 * "wins" if no newer task started in the meantime. Losers resolve to
 * undefined so callers can simply ignore them.
 */
export class Sequenced {
  private seq = 0;

  async run<T>(task: () => Promise<T>): Promise<T | undefined> {
    const ticket = ++this.seq;
    const value = await task();
    return ticket === this.seq ? value : undefined;
  }

  /** True when no task started after the given observation point. */
  get current(): number {
    return this.seq;
  }
}
