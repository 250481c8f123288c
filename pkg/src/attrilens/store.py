"""Portable on-disk stores for datasets, attributions and analyses.

Every store is a directory holding self-describing tensor blobs plus a
`manifest.json` that maps key names to blob files and attribute maps.
Attributes are plain JSON values; tensor-valued attributes (such as
eigenvalues) reference a blob file by name. Project manifests tie the
stores together and selection documents capture a browsing state.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import CategoryAnalysis, ClusteringResult, EmbeddingResult
from .blob import read_blob, write_blob
from .errors import ManifestError, SchemaError, StoreInconsistent
from .tensor import Tensor

_MANIFEST = "manifest.json"


def _slug(name: str) -> str:
    out = re.sub(r"[^A-Za-z0-9_-]", "-", name)
    return out or "unnamed"


def _load_store_manifest(root: Path, kind: str) -> dict:
    path = root / _MANIFEST
    if not path.is_file():
        raise StoreInconsistent(f"{root}: missing {_MANIFEST}")
    try:
        manifest = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise StoreInconsistent(f"{root}: unreadable manifest: {e}") from e
    if manifest.get("kind") != kind:
        raise StoreInconsistent(f"{root}: expected a {kind} store, found {manifest.get('kind')!r}")
    return manifest


def _write_store_manifest(root: Path, manifest: dict) -> None:
    root.mkdir(parents=True, exist_ok=True)
    (root / _MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=1), "utf-8")


def _read_blob_checked(path: Path) -> Tensor:
    if not path.is_file():
        raise StoreInconsistent(f"missing blob file {path}")
    return read_blob(path)


def _read_key(root: Path, manifest: dict, key: str) -> Tensor:
    keys = manifest.get("keys", {})
    if key not in keys:
        raise StoreInconsistent(f"{root}: store has no key {key!r}")
    return _read_blob_checked(root / keys[key])


def _check_label(label: Tensor, n: int, where: str) -> None:
    if label.ndim == 1 and label.dtype == "i64":
        pass
    elif label.ndim == 2 and label.dtype == "u8":
        pass
    else:
        raise StoreInconsistent(
            f"{where}: label must be N int64 or N x L multi-hot u8, got {label.dtype} {label.shape}"
        )
    if label.shape[0] != n:
        raise StoreInconsistent(f"{where}: label has {label.shape[0]} entries for {n} samples")


@dataclass
class DatasetStore:
    root: Path
    data: Tensor
    label: Tensor

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]


@dataclass
class AttributionStore:
    root: Path
    attribution: Tensor
    label: Tensor
    prediction: Tensor

    @property
    def n_samples(self) -> int:
        return self.attribution.shape[0]


def write_dataset_store(root, data: Tensor, label: Tensor) -> Path:
    root = Path(root)
    if data.ndim != 4 or data.dtype not in ("u8", "f32"):
        raise StoreInconsistent(f"data must be N x C x H x W u8 or f32, got {data.dtype} {data.shape}")
    _check_label(label, data.shape[0], str(root))
    root.mkdir(parents=True, exist_ok=True)
    write_blob(root / "data.vzt", data)
    write_blob(root / "label.vzt", label)
    _write_store_manifest(root, {"kind": "dataset", "keys": {"data": "data.vzt", "label": "label.vzt"}})
    return root


def open_dataset_store(root) -> DatasetStore:
    root = Path(root)
    manifest = _load_store_manifest(root, "dataset")
    data = _read_key(root, manifest, "data")
    label = _read_key(root, manifest, "label")
    if data.ndim != 4 or data.dtype not in ("u8", "f32"):
        raise StoreInconsistent(f"{root}: data must be N x C x H x W u8 or f32, got {data.dtype} {data.shape}")
    _check_label(label, data.shape[0], str(root))
    return DatasetStore(root=root, data=data, label=label)


def write_attribution_store(root, attribution: Tensor, label: Tensor, prediction: Tensor) -> Path:
    root = Path(root)
    if attribution.ndim != 4 or attribution.dtype != "f32":
        raise StoreInconsistent(
            f"attribution must be N x C x H x W f32, got {attribution.dtype} {attribution.shape}"
        )
    n = attribution.shape[0]
    _check_label(label, n, str(root))
    if prediction.ndim != 2 or prediction.dtype != "f32" or prediction.shape[0] != n:
        raise StoreInconsistent(
            f"prediction must be {n} x L f32, got {prediction.dtype} {prediction.shape}"
        )
    root.mkdir(parents=True, exist_ok=True)
    write_blob(root / "attribution.vzt", attribution)
    write_blob(root / "label.vzt", label)
    write_blob(root / "prediction.vzt", prediction)
    _write_store_manifest(
        root,
        {
            "kind": "attribution",
            "keys": {
                "attribution": "attribution.vzt",
                "label": "label.vzt",
                "prediction": "prediction.vzt",
            },
        },
    )
    return root


def open_attribution_store(root) -> AttributionStore:
    root = Path(root)
    manifest = _load_store_manifest(root, "attribution")
    attribution = _read_key(root, manifest, "attribution")
    label = _read_key(root, manifest, "label")
    prediction = _read_key(root, manifest, "prediction")
    if attribution.ndim != 4 or attribution.dtype != "f32":
        raise StoreInconsistent(f"{root}: attribution must be N x C x H x W f32")
    n = attribution.shape[0]
    _check_label(label, n, str(root))
    if prediction.ndim != 2 or prediction.dtype != "f32" or prediction.shape[0] != n:
        raise StoreInconsistent(f"{root}: prediction rows ({prediction.shape}) do not match {n} samples")
    return AttributionStore(root=root, attribution=attribution, label=label, prediction=prediction)


# -- analysis store ------------------------------------------------------

class AnalysisStore:
    """Directory holding one or more named analyses, each split into
    categories with an index, embeddings and clusterings."""

    def __init__(self, root):
        self.root = Path(root)
        self._manifest = _load_store_manifest(self.root, "analysis")

    def analysis_names(self) -> list[str]:
        return sorted(self._manifest.get("analyses", {}))

    def categories(self, analysis_name: str) -> list[str]:
        analyses = self._manifest.get("analyses", {})
        if analysis_name not in analyses:
            raise StoreInconsistent(f"{self.root}: no analysis named {analysis_name!r}")
        return sorted(analyses[analysis_name])

    def read(self, analysis_name: str, category_name: str) -> CategoryAnalysis:
        analyses = self._manifest.get("analyses", {})
        entry = analyses.get(analysis_name, {}).get(category_name)
        if entry is None:
            raise StoreInconsistent(
                f"{self.root}: no category {category_name!r} under analysis {analysis_name!r}"
            )
        index = _read_blob_checked(self.root / entry["index"])
        embeddings: dict[str, EmbeddingResult] = {}
        for name, spec in entry.get("embedding", {}).items():
            attrs = spec.get("attrs", {})
            eigenvalues = None
            if "eigenvalue" in attrs:
                eigenvalues = _read_blob_checked(self.root / attrs["eigenvalue"])
            embeddings[name] = EmbeddingResult(
                points=_read_blob_checked(self.root / spec["file"]),
                eigenvalues=eigenvalues,
                base=attrs.get("base"),
            )
        clusterings: dict[str, ClusteringResult] = {}
        scores: dict[str, float] = {}
        for name, spec in entry.get("cluster", {}).items():
            attrs = spec.get("attrs", {})
            if "embedding" not in attrs:
                raise StoreInconsistent(f"{self.root}: clustering {name!r} lacks a base embedding")
            clusterings[name] = ClusteringResult(
                labels=_read_blob_checked(self.root / spec["file"]),
                base=attrs["embedding"],
                params=dict(attrs.get("params", {})),
            )
            if "separability" in attrs:
                scores[f"separability/{name}"] = float(attrs["separability"])
        scores.update({k: float(v) for k, v in entry.get("scores", {}).items()})

        for name, emb in embeddings.items():
            if emb.base is not None and emb.base not in embeddings:
                raise StoreInconsistent(
                    f"{self.root}: embedding {name!r} references unknown base {emb.base!r}"
                )
        for name, cl in clusterings.items():
            if cl.base not in embeddings:
                raise StoreInconsistent(
                    f"{self.root}: clustering {name!r} references unknown base {cl.base!r}"
                )
        analysis = CategoryAnalysis(
            index=index.data.astype(np.int64),
            embeddings=embeddings,
            clusterings=clusterings,
            scores=scores,
        )
        try:
            return analysis.validate()
        except Exception as e:
            raise StoreInconsistent(f"{self.root}: {e}") from e


def write_analysis(root, analysis: CategoryAnalysis, analysis_name: str, category_name: str) -> Path:
    """Adds one category of one named analysis to the store, creating or
    extending the directory."""
    analysis.validate()
    root = Path(root)
    if (root / _MANIFEST).exists():
        manifest = _load_store_manifest(root, "analysis")
    else:
        manifest = {"kind": "analysis", "analyses": {}}
    prefix = f"{_slug(analysis_name)}.{_slug(category_name)}"

    entry: dict = {"embedding": {}, "cluster": {}}
    root.mkdir(parents=True, exist_ok=True)
    index_file = f"{prefix}.index.vzt"
    write_blob(root / index_file, Tensor(analysis.index.astype(np.int64), dtype="i64"))
    entry["index"] = index_file

    for name, emb in analysis.embeddings.items():
        file = f"{prefix}.embedding.{_slug(name)}.vzt"
        write_blob(root / file, emb.points)
        attrs: dict = {}
        if emb.eigenvalues is not None:
            eig_file = f"{prefix}.embedding.{_slug(name)}.eigenvalue.vzt"
            write_blob(root / eig_file, emb.eigenvalues)
            attrs["eigenvalue"] = eig_file
        if emb.base is not None:
            attrs["base"] = emb.base
        entry["embedding"][name] = {"file": file, "attrs": attrs}

    leftover_scores = dict(analysis.scores)
    for name, cl in analysis.clusterings.items():
        file = f"{prefix}.cluster.{_slug(name)}.vzt"
        write_blob(root / file, cl.labels)
        attrs = {"embedding": cl.base, "params": dict(cl.params)}
        sep_key = f"separability/{name}"
        if sep_key in leftover_scores:
            attrs["separability"] = float(leftover_scores.pop(sep_key))
        entry["cluster"][name] = {"file": file, "attrs": attrs}
    if leftover_scores:
        entry["scores"] = {k: float(v) for k, v in leftover_scores.items()}

    manifest["analyses"].setdefault(analysis_name, {})[category_name] = entry
    _write_store_manifest(root, manifest)
    return root


def open_analysis_store(root) -> AnalysisStore:
    return AnalysisStore(root)


# -- label map ------------------------------------------------------------

@dataclass
class LabelEntry:
    index: int
    name: str
    wordnet_id: Optional[str] = None


def save_label_map(path, entries: list[LabelEntry]) -> None:
    rows = []
    for e in entries:
        row: dict = {"index": e.index, "name": e.name}
        if e.wordnet_id is not None:
            row["wordnet_id"] = e.wordnet_id
        rows.append(row)
    Path(path).write_text(json.dumps(rows, indent=1), "utf-8")


def load_label_map(path) -> list[LabelEntry]:
    path = Path(path)
    try:
        rows = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError("label_map", f"unreadable: {e}") from e
    if not isinstance(rows, list) or not rows:
        raise ManifestError("label_map", "must be a non-empty list")
    entries = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or "index" not in row or "name" not in row:
            raise ManifestError("label_map", f"entry {i} needs index and name")
        entries.append(
            LabelEntry(index=int(row["index"]), name=str(row["name"]), wordnet_id=row.get("wordnet_id"))
        )
    indices = sorted(e.index for e in entries)
    if indices != list(range(len(entries))):
        raise ManifestError("label_map", "indices must be unique and dense from 0")
    return sorted(entries, key=lambda e: e.index)


# -- project manifest ------------------------------------------------------

VALID_STRATEGIES = ("true_label", "predicted_label")


@dataclass
class DatasetRef:
    name: str
    type: str
    path: str
    input_width: int
    input_height: int
    label_map_path: str
    up_sampling: str = "none"
    down_sampling: str = "none"


@dataclass
class AttributionRef:
    method: str
    strategy: str
    sources: list[str] = field(default_factory=list)


@dataclass
class AnalysisRef:
    method: str
    sources: list[str] = field(default_factory=list)


@dataclass
class ProjectManifest:
    project: str
    model: str
    dataset: DatasetRef
    attributions: AttributionRef
    analyses: list[AnalysisRef] = field(default_factory=list)


@dataclass
class ProjectBundle:
    manifest: ProjectManifest
    root: Path
    label_map: list[LabelEntry]
    dataset: DatasetStore
    attributions: list[AttributionStore]
    analyses: dict[str, list[AnalysisStore]]
    categories: list[str]


def _require(obj: dict, key: str, kind, where: str):
    dotted = f"{where}.{key}" if where else key
    if not isinstance(obj, dict) or key not in obj:
        raise ManifestError(dotted, "missing")
    value = obj[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ManifestError(dotted, f"expected an integer, got {value!r}")
    elif kind is list:
        if not isinstance(value, list) or not value:
            raise ManifestError(dotted, "expected a non-empty list")
    elif not isinstance(value, kind):
        raise ManifestError(dotted, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def parse_project_manifest(raw: dict) -> ProjectManifest:
    project = _require(raw, "project", str, "")
    model = _require(raw, "model", str, "")
    ds = _require(raw, "dataset", dict, "")
    dataset = DatasetRef(
        name=_require(ds, "name", str, "dataset"),
        type=_require(ds, "type", str, "dataset"),
        path=_require(ds, "path", str, "dataset"),
        input_width=_require(ds, "input_width", int, "dataset"),
        input_height=_require(ds, "input_height", int, "dataset"),
        label_map_path=_require(ds, "label_map_path", str, "dataset"),
        up_sampling=str(ds.get("up_sampling", "none")),
        down_sampling=str(ds.get("down_sampling", "none")),
    )
    at = _require(raw, "attributions", dict, "")
    strategy = _require(at, "strategy", str, "attributions")
    if strategy not in VALID_STRATEGIES:
        raise ManifestError("attributions.strategy", f"must be one of {VALID_STRATEGIES}, got {strategy!r}")
    attributions = AttributionRef(
        method=_require(at, "method", str, "attributions"),
        strategy=strategy,
        sources=[str(s) for s in _require(at, "sources", list, "attributions")],
    )
    analyses = []
    raw_analyses = raw.get("analyses", [])
    if not isinstance(raw_analyses, list):
        raise ManifestError("analyses", "expected a list")
    for i, item in enumerate(raw_analyses):
        if not isinstance(item, dict):
            raise ManifestError(f"analyses[{i}]", "expected an object")
        analyses.append(
            AnalysisRef(
                method=_require(item, "method", str, f"analyses[{i}]"),
                sources=[str(s) for s in _require(item, "sources", list, f"analyses[{i}]")],
            )
        )
    return ProjectManifest(
        project=project, model=model, dataset=dataset, attributions=attributions, analyses=analyses
    )


def write_project_manifest(path, manifest: ProjectManifest) -> None:
    raw = {
        "project": manifest.project,
        "model": manifest.model,
        "dataset": {
            "name": manifest.dataset.name,
            "type": manifest.dataset.type,
            "path": manifest.dataset.path,
            "input_width": manifest.dataset.input_width,
            "input_height": manifest.dataset.input_height,
            "up_sampling": manifest.dataset.up_sampling,
            "down_sampling": manifest.dataset.down_sampling,
            "label_map_path": manifest.dataset.label_map_path,
        },
        "attributions": {
            "method": manifest.attributions.method,
            "strategy": manifest.attributions.strategy,
            "sources": list(manifest.attributions.sources),
        },
        "analyses": [
            {"method": a.method, "sources": list(a.sources)} for a in manifest.analyses
        ],
    }
    Path(path).write_text(json.dumps(raw, sort_keys=True, indent=1), "utf-8")


def open_project(manifest_path) -> ProjectBundle:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestError("manifest", f"{manifest_path} not found")
    try:
        raw = json.loads(manifest_path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError("manifest", f"not valid JSON: {e}") from e
    manifest = parse_project_manifest(raw)
    root = manifest_path.parent

    def resolve(rel: str, fld: str) -> Path:
        p = root / rel
        if not p.exists():
            raise ManifestError(fld, f"{p} does not exist")
        return p

    label_map = load_label_map(resolve(manifest.dataset.label_map_path, "dataset.label_map_path"))
    dataset = open_dataset_store(resolve(manifest.dataset.path, "dataset.path"))
    attributions = [
        open_attribution_store(resolve(src, f"attributions.sources[{i}]"))
        for i, src in enumerate(manifest.attributions.sources)
    ]
    analyses: dict[str, list[AnalysisStore]] = {}
    for ai, ref in enumerate(manifest.analyses):
        analyses[ref.method] = [
            open_analysis_store(resolve(src, f"analyses[{ai}].sources[{i}]"))
            for i, src in enumerate(ref.sources)
        ]

    n = dataset.n_samples
    n_classes = len(label_map)
    if dataset.label.ndim == 1:
        lab = dataset.label.data
        if lab.size and (lab.min() < 0 or lab.max() >= n_classes):
            raise StoreInconsistent(
                f"dataset labels span [{lab.min()}, {lab.max()}] but the label map has {n_classes} classes"
            )
    else:
        if dataset.label.shape[1] != n_classes:
            raise StoreInconsistent(
                f"multi-hot labels have {dataset.label.shape[1]} columns for {n_classes} classes"
            )
    for store in attributions:
        if store.n_samples != n:
            raise StoreInconsistent(
                f"{store.root}: {store.n_samples} attributions for {n} dataset samples"
            )
        if store.prediction.shape[1] != n_classes:
            raise StoreInconsistent(
                f"{store.root}: prediction has {store.prediction.shape[1]} columns for {n_classes} classes"
            )
    category_names: set[str] = set()
    for stores in analyses.values():
        for store in stores:
            for analysis_name in store.analysis_names():
                for cat in store.categories(analysis_name):
                    analysis = store.read(analysis_name, cat)
                    if analysis.index.size and analysis.index.max() >= n:
                        raise StoreInconsistent(
                            f"{store.root}: index {analysis.index.max()} out of range for {n} samples"
                        )
                    category_names.add(cat)
    if category_names:
        categories = sorted(category_names)
    else:
        categories = [e.name for e in label_map]
    return ProjectBundle(
        manifest=manifest,
        root=root,
        label_map=label_map,
        dataset=dataset,
        attributions=attributions,
        analyses=analyses,
        categories=categories,
    )


# -- selection documents ----------------------------------------------------

VALID_MODES = ("input", "attribution", "overlay")

_SELECTION_FIELDS = (
    "project",
    "analysis",
    "category",
    "clustering",
    "embedding",
    "colormap",
    "mode",
    "selected_indices",
)


@dataclass
class SelectionDocument:
    project: str
    analysis: str
    category: str
    clustering: str
    embedding: str
    colormap: str
    mode: str
    selected_indices: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in VALID_MODES:
            raise SchemaError("mode", f"must be one of {VALID_MODES}, got {self.mode!r}")


def encode_selection(doc: SelectionDocument) -> bytes:
    payload = {
        "project": doc.project,
        "analysis": doc.analysis,
        "category": doc.category,
        "clustering": doc.clustering,
        "embedding": doc.embedding,
        "colormap": doc.colormap,
        "mode": doc.mode,
        "selected_indices": list(doc.selected_indices),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_selection(raw) -> SelectionDocument:
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise SchemaError("document", f"not UTF-8: {e}") from e
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SchemaError("document", f"not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise SchemaError("document", "must be a JSON object")
    for key in payload:
        if key not in _SELECTION_FIELDS:
            raise SchemaError(key, "unknown field")
    for fld in _SELECTION_FIELDS:
        if fld not in payload:
            raise SchemaError(fld, "missing")
    for fld in _SELECTION_FIELDS[:-1]:
        if not isinstance(payload[fld], str):
            raise SchemaError(fld, "expected a string")
    if payload["mode"] not in VALID_MODES:
        raise SchemaError("mode", f"must be one of {VALID_MODES}, got {payload['mode']!r}")
    idx = payload["selected_indices"]
    if not isinstance(idx, list) or any(
        isinstance(i, bool) or not isinstance(i, int) or i < 0 for i in idx
    ):
        raise SchemaError("selected_indices", "expected a list of non-negative integers")
    return SelectionDocument(
        project=payload["project"],
        analysis=payload["analysis"],
        category=payload["category"],
        clustering=payload["clustering"],
        embedding=payload["embedding"],
        colormap=payload["colormap"],
        mode=payload["mode"],
        selected_indices=list(idx),
    )
