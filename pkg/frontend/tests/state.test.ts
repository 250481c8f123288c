import { describe, expect, it } from "vitest";

import {
  Selection,
  SelectionError,
  decodeSelection,
  encodeSelection,
  initialSelection,
  selectionForAnalysis,
  selectionFromFragment,
  selectionToFragment,
  validateSelection,
} from "../src/state.js";

const SELECTION: Selection = {
  project: "clever-hans",
  analysis: "spectral",
  category: "circle",
  clustering: "kmeans-3",
  embedding: "tsne",
  colormap: "hot",
  mode: "overlay",
  selected_indices: [3, 1, 414],
};

// Byte-for-byte what the server's canonical encoder (sorted keys, compact
// separators) produces for the same document, and its base64url form.
const CANONICAL =
  '{"analysis":"spectral","category":"circle","clustering":"kmeans-3",' +
  '"colormap":"hot","embedding":"tsne","mode":"overlay",' +
  '"project":"clever-hans","selected_indices":[3,1,414]}';
const FRAGMENT =
  "eyJhbmFseXNpcyI6InNwZWN0cmFsIiwiY2F0ZWdvcnkiOiJjaXJjbGUiLCJjbHVzdGVyaW5nIjo" +
  "ia21lYW5zLTMiLCJjb2xvcm1hcCI6ImhvdCIsImVtYmVkZGluZyI6InRzbmUiLCJtb2RlIjoib3" +
  "ZlcmxheSIsInByb2plY3QiOiJjbGV2ZXItaGFucyIsInNlbGVjdGVkX2luZGljZXMiOlszLDEsN" +
  "DE0XX0";

describe("selection codec", () => {
  it("encodes to the server's canonical JSON", () => {
    expect(encodeSelection(SELECTION)).toBe(CANONICAL);
  });

  it("roundtrips through encode/decode", () => {
    expect(decodeSelection(encodeSelection(SELECTION))).toEqual(SELECTION);
  });

  it("preserves selected_indices order", () => {
    const decoded = decodeSelection(CANONICAL);
    expect(decoded.selected_indices).toEqual([3, 1, 414]);
  });

  it("returns an independent copy of the indices", () => {
    const raw = { ...SELECTION, selected_indices: [1, 2] };
    const validated = validateSelection(raw);
    raw.selected_indices.push(99);
    expect(validated.selected_indices).toEqual([1, 2]);
  });
});

describe("selection validation", () => {
  const base = () => JSON.parse(CANONICAL) as Record<string, unknown>;

  it.each([[null], [42], ["text"], [[1, 2]]])("rejects non-object %j", (value) => {
    expect(() => validateSelection(value)).toThrow(SelectionError);
  });

  it("rejects unknown fields", () => {
    expect(() => validateSelection({ ...base(), extra: 1 })).toThrow(/unknown field/);
  });

  it("rejects missing fields", () => {
    const raw = base();
    delete raw.category;
    expect(() => validateSelection(raw)).toThrow(/category: missing/);
  });

  it("rejects non-string settings", () => {
    expect(() => validateSelection({ ...base(), colormap: 7 })).toThrow(/expected a string/);
  });

  it("rejects unknown modes", () => {
    expect(() => validateSelection({ ...base(), mode: "3d" })).toThrow(/mode/);
  });

  it.each([[[-1]], [[1.5]], [["2"]], ["nope"]])(
    "rejects bad selected_indices %j",
    (indices) => {
      expect(() => validateSelection({ ...base(), selected_indices: indices })).toThrow(
        /selected_indices/,
      );
    },
  );

  it("reports malformed JSON as a document error", () => {
    try {
      decodeSelection("{not json");
      expect.unreachable();
    } catch (e) {
      expect(e).toBeInstanceOf(SelectionError);
      expect((e as SelectionError).field).toBe("document");
    }
  });
});

describe("share fragment", () => {
  it("encodes to unpadded base64url", () => {
    const frag = selectionToFragment(SELECTION);
    expect(frag).toBe(FRAGMENT);
    expect(frag).not.toMatch(/[+/=]/);
  });

  it("roundtrips, with or without a leading #", () => {
    expect(selectionFromFragment(FRAGMENT)).toEqual(SELECTION);
    expect(selectionFromFragment(`#${FRAGMENT}`)).toEqual(SELECTION);
  });

  it("rejects garbage payloads", () => {
    expect(() => selectionFromFragment("#!!!")).toThrow(SelectionError);
  });
});

const DETAIL = {
  analyses: ["spectral", "spray"],
  categories: ["circle", "square"],
  clusterings: ["kmeans-2", "kmeans-3"],
  embeddings: ["spectral", "tsne"],
  colormaps: ["coldnhot", "hot", "gray"],
  modes: ["input", "attribution", "overlay"],
};

describe("selection rules", () => {
  it("starts from the first entry of every enumeration", () => {
    expect(initialSelection("demo", DETAIL)).toEqual({
      project: "demo",
      analysis: "spectral",
      category: "circle",
      clustering: "kmeans-2",
      embedding: "spectral",
      colormap: "coldnhot",
      mode: "input",
      selected_indices: [],
    });
  });

  it("switching analysis resets the category and clears picks", () => {
    const prev: Selection = {
      ...initialSelection("demo", DETAIL),
      category: "square",
      clustering: "kmeans-3",
      embedding: "tsne",
      colormap: "gray",
      mode: "overlay",
      selected_indices: [4, 9],
    };
    const next = selectionForAnalysis(prev, DETAIL, "spray");
    expect(next.analysis).toBe("spray");
    expect(next.category).toBe("circle");
    expect(next.clustering).toBe("kmeans-2");
    expect(next.selected_indices).toEqual([]);
    // Presentation settings that are still offered survive the switch.
    expect(next.embedding).toBe("tsne");
    expect(next.colormap).toBe("gray");
    expect(next.mode).toBe("overlay");
  });

  it("falls back when a kept setting is no longer offered", () => {
    const prev: Selection = { ...initialSelection("demo", DETAIL), embedding: "umap" };
    const next = selectionForAnalysis(prev, DETAIL, "spray");
    expect(next.embedding).toBe("spectral");
  });
});
