"""Shared helpers and fixtures for the test suite."""

import numpy as np
import pytest

from attrilens import cli
from attrilens.store import (
    AnalysisRef,
    AttributionRef,
    DatasetRef,
    ProjectManifest,
    write_project_manifest,
)


@pytest.fixture(scope="session")
def demo_chain(tmp_path_factory):
    """A small but complete workflow run: dataset, model, attributions,
    analysis and a project manifest, all under one directory.

    30 samples per class keep the whole chain under a few seconds while
    leaving every category large enough for the default knn/eigval
    settings (tsne perplexity is lowered accordingly).
    """
    root = tmp_path_factory.mktemp("chain")
    paths = {
        "root": root,
        "data": root / "data",
        "model": root / "model",
        "attr": root / "attr",
        "analysis": root / "analysis",
        "manifest": root / "project.json",
    }
    steps = [
        ["synth", "--out", str(paths["data"]), "--n-per-class", "30",
         "--watermark-fraction", "0.5", "--seed", "0"],
        ["train", "--data", str(paths["data"]), "--out", str(paths["model"]),
         "--epochs", "8", "--seed", "0"],
        ["attribute", "--data", str(paths["data"]), "--model", str(paths["model"]),
         "--out", str(paths["attr"])],
        ["analyze", "--attr", str(paths["attr"]), "--out", str(paths["analysis"]),
         "--n-eigval", "8", "--tsne-perplexity", "5", "--tsne-iters", "100",
         "--kmeans-min", "2", "--kmeans-max", "5", "--seed", "0"],
    ]
    for argv in steps:
        assert cli.main(argv) == 0, f"chain step failed: {argv[0]}"
    write_project_manifest(
        paths["manifest"],
        ProjectManifest(
            project="shapes demo",
            model="demo cnn",
            dataset=DatasetRef(
                name="synthetic shapes",
                type="image",
                path="data",
                input_width=32,
                input_height=32,
                label_map_path="data/label_map.json",
            ),
            attributions=AttributionRef(
                method="epsilon-gamma-box", strategy="true_label", sources=["attr"]
            ),
            analyses=[AnalysisRef(method="spectral", sources=["analysis"])],
        ),
    )
    return paths


def ari(a, b) -> float:
    """Adjusted Rand index between two labelings."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    assert a.size == b.size
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    C = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(C, (ia, ib), 1)

    def comb2(x):
        return x * (x - 1) // 2

    sum_ij = comb2(C).sum()
    sum_a = comb2(C.sum(axis=1)).sum()
    sum_b = comb2(C.sum(axis=0)).sum()
    total = comb2(a.size)
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def graph_components(W) -> int:
    """Number of connected components of an adjacency matrix (union-find)."""
    W = np.asarray(W)
    n = W.shape[0]
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if W[i, j] > 0:
                parent[find(i)] = find(j)
    return len({find(i) for i in range(n)})
