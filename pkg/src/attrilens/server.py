"""Read-only HTTP/JSON service for browsing analysis results.

Serves one or more project bundles to the web explorer: project
listings, per-category embeddings and clusterings, rendered sample
images, and selection-document validation for import/export/share.
All state is loaded once at startup and never mutated; the only cache
is a render cache keyed by (sample index, mode, colormap), so repeated
identical requests return byte-identical bodies.

Endpoints::

    GET  /api/projects
    GET  /api/projects/{id}
    GET  /api/projects/{id}/embedding?analysis&category&method
    GET  /api/projects/{id}/clustering?analysis&category&name
    GET  /api/projects/{id}/sample/{index}/image?mode&colormap
    GET  /api/state?d=<base64url(JSON)>
    POST /api/state
"""

from __future__ import annotations

import base64
import binascii
import json
import socket
import threading
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .attribution.image import COLORMAPS, encode_png_rgb, render_heatmap
from .errors import BindError, SchemaError, ToolkitError
from .store import (
    VALID_MODES,
    ProjectBundle,
    decode_selection,
    encode_selection,
    open_project,
)
from .tensor import Tensor


def _natural_key(name: str):
    """Sort helper that orders kmeans-2 before kmeans-10."""
    parts = []
    digits = ""
    for ch in name:
        if ch.isdigit():
            digits += ch
        else:
            if digits:
                parts.append((1, int(digits), ""))
                digits = ""
            parts.append((0, 0, ch))
    if digits:
        parts.append((1, int(digits), ""))
    return parts


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


class _RenderCache:
    """PNG bytes keyed by (index, mode, colormap); insertions serialized."""

    def __init__(self):
        self._entries: dict[tuple, bytes] = {}
        self._lock = threading.Lock()

    def get_or_render(self, key: tuple, render) -> bytes:
        cached = self._entries.get(key)
        if cached is not None:
            return cached
        png = render()
        with self._lock:
            return self._entries.setdefault(key, png)


def _category_analysis(bundle: ProjectBundle, analysis: str, category: str):
    """The stored CategoryAnalysis for (analysis, category), or None."""
    for stores in bundle.analyses.values():
        for store in stores:
            if analysis in store.analysis_names() and category in store.categories(analysis):
                return store.read(analysis, category)
    return None


def _sample_gray(bundle: ProjectBundle, index: int) -> np.ndarray:
    img = bundle.dataset.data.data[index].astype(np.float64)
    if img.shape[0] == 3:
        gray = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    else:
        gray = img[0]
    return np.floor(gray + 0.5).clip(0, 255).astype(np.uint8)


def build_app(bundles: list[ProjectBundle], cors: bool = False) -> FastAPI:
    """The API application over already-loaded project bundles."""
    app = FastAPI(title="attrilens", docs_url=None, redoc_url=None)
    if cors:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])
    cache = _RenderCache()

    def bundle_or_none(project_id: int) -> Optional[ProjectBundle]:
        if 0 <= project_id < len(bundles):
            return bundles[project_id]
        return None

    @app.get("/api/projects")
    def list_projects():
        return [
            {
                "id": i,
                "project_name": b.manifest.project,
                "model_name": b.manifest.model,
                "dataset_name": b.manifest.dataset.name,
            }
            for i, b in enumerate(bundles)
        ]

    @app.get("/api/projects/{project_id}")
    def project_detail(project_id: int):
        bundle = bundle_or_none(project_id)
        if bundle is None:
            return _error(404, f"unknown project id {project_id}")
        analyses: set[str] = set()
        clusterings: set[str] = set()
        embeddings: set[str] = set()
        for stores in bundle.analyses.values():
            for store in stores:
                for name in store.analysis_names():
                    analyses.add(name)
                    for cat in store.categories(name):
                        parsed = store.read(name, cat)
                        clusterings.update(parsed.clusterings)
                        embeddings.update(parsed.embeddings)
        return {
            "analyses": sorted(analyses),
            "categories": list(bundle.categories),
            "clusterings": sorted(clusterings, key=_natural_key),
            "embeddings": sorted(embeddings),
            "colormaps": list(COLORMAPS),
            "modes": list(VALID_MODES),
        }

    @app.get("/api/projects/{project_id}/embedding")
    def embedding(project_id: int, analysis: str, category: str, method: str):
        bundle = bundle_or_none(project_id)
        if bundle is None:
            return _error(404, f"unknown project id {project_id}")
        parsed = _category_analysis(bundle, analysis, category)
        if parsed is None:
            return _error(404, f"no analysis {analysis!r} for category {category!r}")
        emb = parsed.embeddings.get(method)
        if emb is None:
            return _error(404, f"no embedding {method!r}")
        payload = {
            "points": emb.points.data[:, :2].astype(float).tolist(),
            "indices": parsed.index.astype(int).tolist(),
        }
        if emb.eigenvalues is not None:
            payload["eigenvalues"] = emb.eigenvalues.data.astype(float).tolist()
        return payload

    @app.get("/api/projects/{project_id}/clustering")
    def clustering(project_id: int, analysis: str, category: str, name: str):
        bundle = bundle_or_none(project_id)
        if bundle is None:
            return _error(404, f"unknown project id {project_id}")
        parsed = _category_analysis(bundle, analysis, category)
        if parsed is None:
            return _error(404, f"no analysis {analysis!r} for category {category!r}")
        cl = parsed.clusterings.get(name)
        if cl is None:
            return _error(404, f"no clustering {name!r}")
        labels = cl.labels.data.astype(int)
        values, counts = np.unique(labels, return_counts=True)
        return {
            "labels": labels.tolist(),
            "cluster_sizes": {str(v): int(c) for v, c in zip(values, counts)},
        }

    @app.get("/api/projects/{project_id}/sample/{index}/image")
    def sample_image(project_id: int, index: int, mode: str = "input", colormap: str = "coldnhot"):
        bundle = bundle_or_none(project_id)
        if bundle is None:
            return _error(404, f"unknown project id {project_id}")
        if mode not in VALID_MODES:
            return _error(400, f"unknown mode {mode!r}")
        if colormap not in COLORMAPS:
            return _error(400, f"unknown colormap {colormap!r}")
        if not 0 <= index < bundle.dataset.n_samples:
            return _error(404, f"sample index {index} out of range")

        def render() -> bytes:
            if mode == "input":
                gray = _sample_gray(bundle, index)
                return encode_png_rgb(np.stack([gray] * 3, axis=-1))
            relevance = Tensor(bundle.attributions[0].attribution.data[index], dtype="f32")
            if mode == "attribution":
                return render_heatmap(relevance, colormap=colormap)
            base = Tensor(bundle.dataset.data.data[index])
            return render_heatmap(relevance, colormap=colormap, mode="overlay", base_image=base)

        png = cache.get_or_render((index, mode, colormap), render)
        return Response(content=png, media_type="image/png")

    @app.get("/api/state")
    def get_state(d: Optional[str] = None):
        if d is None:
            return _error(400, "missing query parameter d")
        pad = "=" * (-len(d) % 4)
        try:
            raw = base64.urlsafe_b64decode(d + pad)
        except (binascii.Error, ValueError):
            return _error(400, "d is not valid base64url")
        try:
            doc = decode_selection(raw)
        except SchemaError as e:
            return _error(400, str(e))
        return json.loads(encode_selection(doc))

    @app.post("/api/state")
    async def post_state(request: Request):
        body = await request.body()
        try:
            doc = decode_selection(body)
        except SchemaError as e:
            return _error(400, str(e))
        return json.loads(encode_selection(doc))

    return app


def serve(manifest_paths: list[str], host: str = "127.0.0.1", port: int = 8000, cors: bool = False) -> None:
    """Load the given project manifests and serve them over HTTP.

    Raises BindError up front when the address is already taken, before
    any bundle loading output would suggest the server came up.
    """
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as e:
        raise BindError(f"cannot bind {host}:{port}: {e}") from e
    finally:
        probe.close()

    bundles = [open_project(path) for path in manifest_paths]
    app = build_app(bundles, cors=cors)

    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")
