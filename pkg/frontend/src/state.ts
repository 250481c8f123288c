/** Selection document codec and view-state rules.
 *
 * The selection half of the view state is exactly the document the
 * server validates: encoding here must stay byte-compatible with the
 * server's canonical form (sorted keys, compact separators) so share
 * payloads roundtrip bit-for-bit.
 */

export const MODES = ["input", "attribution", "overlay"] as const;
export type Mode = (typeof MODES)[number];

export interface Selection {
  project: string;
  analysis: string;
  category: string;
  clustering: string;
  embedding: string;
  colormap: string;
  mode: Mode;
  selected_indices: number[];
}

export interface Viewport {
  scale: number;
  tx: number;
  ty: number;
}

export interface ViewState {
  selection: Selection;
  viewport: Viewport;
  hover: number | null;
}

export class SelectionError extends Error {
  constructor(
    readonly field: string,
    detail: string,
  ) {
    super(`${field}: ${detail}`);
    this.name = "SelectionError";
  }
}

const STRING_FIELDS = [
  "project",
  "analysis",
  "category",
  "clustering",
  "embedding",
  "colormap",
  "mode",
] as const;

/** Strict schema check mirroring the server's document validation. */
export function validateSelection(raw: unknown): Selection {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new SelectionError("document", "must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  const known = new Set<string>([...STRING_FIELDS, "selected_indices"]);
  for (const key of Object.keys(obj)) {
    if (!known.has(key)) throw new SelectionError(key, "unknown field");
  }
  for (const field of known) {
    if (!(field in obj)) throw new SelectionError(field, "missing");
  }
  for (const field of STRING_FIELDS) {
    if (typeof obj[field] !== "string") throw new SelectionError(field, "expected a string");
  }
  if (!MODES.includes(obj.mode as Mode)) {
    throw new SelectionError("mode", `must be one of ${MODES.join(", ")}`);
  }
  const indices = obj.selected_indices;
  if (
    !Array.isArray(indices) ||
    indices.some((i) => typeof i !== "number" || !Number.isInteger(i) || i < 0)
  ) {
    throw new SelectionError("selected_indices", "expected a list of non-negative integers");
  }
  return {
    project: obj.project as string,
    analysis: obj.analysis as string,
    category: obj.category as string,
    clustering: obj.clustering as string,
    embedding: obj.embedding as string,
    colormap: obj.colormap as string,
    mode: obj.mode as Mode,
    selected_indices: [...(indices as number[])],
  };
}

/** Canonical JSON: keys sorted, no whitespace. */
export function encodeSelection(sel: Selection): string {
  const ordered = {
    analysis: sel.analysis,
    category: sel.category,
    clustering: sel.clustering,
    colormap: sel.colormap,
    embedding: sel.embedding,
    mode: sel.mode,
    project: sel.project,
    selected_indices: sel.selected_indices,
  };
  return JSON.stringify(ordered);
}

export function decodeSelection(text: string): Selection {
  let parsed: unknown;
  try {
    parsed = JSON.parse(text);
  } catch (e) {
    throw new SelectionError("document", `not valid JSON: ${String(e)}`);
  }
  return validateSelection(parsed);
}

/** URL-fragment payload: base64url of the canonical JSON, unpadded. */
export function selectionToFragment(sel: Selection): string {
  const b64 = btoa(encodeSelection(sel));
  return b64.replace(/\+/g, "-").replace(/\//g, "_").replace(/=+$/, "");
}

export function selectionFromFragment(fragment: string): Selection {
  const cleaned = fragment.replace(/^#/, "");
  let b64 = cleaned.replace(/-/g, "+").replace(/_/g, "/");
  while (b64.length % 4 !== 0) b64 += "=";
  let text: string;
  try {
    text = atob(b64);
  } catch (e) {
    throw new SelectionError("document", `not valid base64: ${String(e)}`);
  }
  return decodeSelection(text);
}

export interface DetailLike {
  analyses: string[];
  categories: string[];
  clusterings: string[];
  embeddings: string[];
  colormaps: string[];
  modes: string[];
}

function keep(value: string, options: string[], fallback: string): string {
  return options.includes(value) ? value : fallback;
}

/** Fresh selection for a newly loaded project: first entry everywhere. */
export function initialSelection(project: string, detail: DetailLike): Selection {
  return {
    project,
    analysis: detail.analyses[0] ?? "",
    category: detail.categories[0] ?? "",
    clustering: detail.clusterings[0] ?? "",
    embedding: detail.embeddings[0] ?? "",
    colormap: detail.colormaps[0] ?? "",
    mode: (detail.modes[0] as Mode) ?? "input",
    selected_indices: [],
  };
}

/** Switching analysis resets the category (and dependent choices) while
 * keeping presentation settings that are still valid. */
export function selectionForAnalysis(
  prev: Selection,
  detail: DetailLike,
  analysis: string,
): Selection {
  return {
    project: prev.project,
    analysis,
    category: detail.categories[0] ?? "",
    clustering: detail.clusterings[0] ?? "",
    embedding: keep(prev.embedding, detail.embeddings, detail.embeddings[0] ?? ""),
    colormap: keep(prev.colormap, detail.colormaps, detail.colormaps[0] ?? ""),
    mode: keep(prev.mode, detail.modes, detail.modes[0] ?? "input") as Mode,
    selected_indices: [],
  };
}
