import base64
import json
import socket

import pytest
from fastapi.testclient import TestClient
from PIL import Image
import io

from attrilens.errors import BindError
from attrilens.server import build_app, serve
from attrilens.store import open_project


@pytest.fixture(scope="module")
def bundle(demo_chain):
    return open_project(demo_chain["manifest"])


@pytest.fixture(scope="module")
def client(bundle):
    return TestClient(build_app([bundle]))


def _selection(**overrides):
    doc = {
        "project": "shapes demo",
        "analysis": "spectral",
        "category": "circle",
        "clustering": "kmeans-2",
        "embedding": "spectral",
        "colormap": "coldnhot",
        "mode": "attribution",
        "selected_indices": [0, 2],
    }
    doc.update(overrides)
    return doc


class TestProjects:
    def test_single_project_listing(self, client):
        r = client.get("/api/projects")
        assert r.status_code == 200
        assert r.headers["content-type"].startswith("application/json")
        assert r.json() == [
            {
                "id": 0,
                "project_name": "shapes demo",
                "model_name": "demo cnn",
                "dataset_name": "synthetic shapes",
            }
        ]

    def test_two_projects_get_sequential_ids(self, bundle):
        two = TestClient(build_app([bundle, bundle]))
        listing = two.get("/api/projects").json()
        assert [p["id"] for p in listing] == [0, 1]

    def test_detail_enumerations(self, client):
        r = client.get("/api/projects/0")
        assert r.status_code == 200
        detail = r.json()
        assert detail["analyses"] == ["spectral"]
        assert detail["categories"] == ["circle", "square", "triangle"]
        assert detail["clusterings"] == ["kmeans-2", "kmeans-3", "kmeans-4", "kmeans-5"]
        assert detail["embeddings"] == ["spectral", "tsne"]
        assert detail["modes"] == ["input", "attribution", "overlay"]
        assert "coldnhot" in detail["colormaps"]

    def test_unknown_project_id(self, client):
        r = client.get("/api/projects/9")
        assert r.status_code == 404
        assert "error" in r.json()


class TestEmbedding:
    def test_spectral_embedding_payload(self, client):
        r = client.get(
            "/api/projects/0/embedding",
            params={"analysis": "spectral", "category": "circle", "method": "spectral"},
        )
        assert r.status_code == 200
        payload = r.json()
        assert len(payload["points"]) == len(payload["indices"]) == 30
        assert all(len(p) == 2 for p in payload["points"])
        assert len(payload["eigenvalues"]) == 8

    def test_tsne_has_no_eigenvalues(self, client):
        r = client.get(
            "/api/projects/0/embedding",
            params={"analysis": "spectral", "category": "circle", "method": "tsne"},
        )
        assert r.status_code == 200
        assert "eigenvalues" not in r.json()

    def test_unknown_names_are_404(self, client):
        for params in (
            {"analysis": "nope", "category": "circle", "method": "spectral"},
            {"analysis": "spectral", "category": "nope", "method": "spectral"},
            {"analysis": "spectral", "category": "circle", "method": "nope"},
        ):
            r = client.get("/api/projects/0/embedding", params=params)
            assert r.status_code == 404
            assert "error" in r.json()


class TestClustering:
    def test_sizes_sum_to_category(self, client):
        r = client.get(
            "/api/projects/0/clustering",
            params={"analysis": "spectral", "category": "circle", "name": "kmeans-2"},
        )
        assert r.status_code == 200
        payload = r.json()
        assert len(payload["labels"]) == 30
        assert sum(payload["cluster_sizes"].values()) == 30
        assert max(payload["labels"]) < 2

    def test_unknown_clustering(self, client):
        r = client.get(
            "/api/projects/0/clustering",
            params={"analysis": "spectral", "category": "circle", "name": "kmeans-99"},
        )
        assert r.status_code == 404

    def test_index_alignment_across_endpoints(self, client, bundle):
        """Embedding, clustering and stored index arrays line up 1:1."""
        for category in ("circle", "square", "triangle"):
            spectral = client.get(
                "/api/projects/0/embedding",
                params={"analysis": "spectral", "category": category, "method": "spectral"},
            ).json()
            tsne = client.get(
                "/api/projects/0/embedding",
                params={"analysis": "spectral", "category": category, "method": "tsne"},
            ).json()
            labels = client.get(
                "/api/projects/0/clustering",
                params={"analysis": "spectral", "category": category, "name": "kmeans-3"},
            ).json()["labels"]
            assert spectral["indices"] == tsne["indices"]
            assert len(labels) == len(spectral["indices"]) == len(spectral["points"])
            n = bundle.dataset.n_samples
            assert all(0 <= i < n for i in spectral["indices"])


class TestSampleImage:
    def test_input_mode_is_truecolor(self, client):
        r = client.get("/api/projects/0/sample/0/image", params={"mode": "input"})
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        with Image.open(io.BytesIO(r.content)) as img:
            assert img.mode == "RGB"
            assert img.size == (32, 32)

    def test_attribution_mode_is_palette(self, client):
        r = client.get(
            "/api/projects/0/sample/0/image",
            params={"mode": "attribution", "colormap": "coldnhot"},
        )
        assert r.status_code == 200
        with Image.open(io.BytesIO(r.content)) as img:
            assert img.mode == "P"

    def test_overlay_mode_renders(self, client):
        r = client.get(
            "/api/projects/0/sample/5/image",
            params={"mode": "overlay", "colormap": "hot"},
        )
        assert r.status_code == 200
        with Image.open(io.BytesIO(r.content)) as img:
            assert img.mode == "RGB"

    def test_bad_mode_is_400(self, client):
        r = client.get("/api/projects/0/sample/0/image", params={"mode": "sideways"})
        assert r.status_code == 400

    def test_bad_colormap_is_400(self, client):
        r = client.get(
            "/api/projects/0/sample/0/image",
            params={"mode": "attribution", "colormap": "neon"},
        )
        assert r.status_code == 400

    def test_out_of_range_index_is_404(self, client):
        r = client.get("/api/projects/0/sample/90/image", params={"mode": "input"})
        assert r.status_code == 404

    def test_repeated_requests_are_byte_identical(self, client):
        params = {"mode": "attribution", "colormap": "gray"}
        first = client.get("/api/projects/0/sample/7/image", params=params)
        second = client.get("/api/projects/0/sample/7/image", params=params)
        assert first.content == second.content


class TestState:
    def test_post_echoes_canonical_form(self, client):
        doc = _selection()
        r = client.post("/api/state", content=json.dumps(doc))
        assert r.status_code == 200
        assert r.json() == doc

    def test_get_roundtrip_via_base64url(self, client):
        doc = _selection(selected_indices=[])
        payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        encoded = base64.urlsafe_b64encode(payload).decode().rstrip("=")
        r = client.get("/api/state", params={"d": encoded})
        assert r.status_code == 200
        assert r.json() == doc

    def test_post_get_roundtrip_identical(self, client):
        doc = _selection(mode="overlay")
        canonical = client.post("/api/state", content=json.dumps(doc)).json()
        payload = json.dumps(canonical, sort_keys=True, separators=(",", ":")).encode()
        encoded = base64.urlsafe_b64encode(payload).decode()
        assert client.get("/api/state", params={"d": encoded}).json() == doc

    def test_tampered_payload_is_400(self, client):
        r = client.get("/api/state", params={"d": "not*base64!"})
        assert r.status_code == 400
        r = client.get("/api/state", params={"d": base64.urlsafe_b64encode(b"{oops").decode()})
        assert r.status_code == 400

    def test_invalid_document_is_400(self, client):
        bad = _selection(mode="sideways")
        r = client.post("/api/state", content=json.dumps(bad))
        assert r.status_code == 400
        assert "error" in r.json()

    def test_missing_query_param_is_400(self, client):
        assert client.get("/api/state").status_code == 400


class TestCors:
    def test_disabled_by_default(self, bundle):
        c = TestClient(build_app([bundle]))
        r = c.get("/api/projects", headers={"Origin": "http://elsewhere"})
        assert "access-control-allow-origin" not in r.headers

    def test_enabled_with_flag(self, bundle):
        c = TestClient(build_app([bundle], cors=True))
        r = c.get("/api/projects", headers={"Origin": "http://elsewhere"})
        assert r.headers["access-control-allow-origin"] == "*"


class TestServe:
    def test_bind_error_when_port_taken(self, demo_chain):
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as holder:
            holder.bind(("127.0.0.1", 0))
            holder.listen(1)
            port = holder.getsockname()[1]
            with pytest.raises(BindError):
                serve([str(demo_chain["manifest"])], port=port)
