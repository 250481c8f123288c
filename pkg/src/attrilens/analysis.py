"""Dataset-wide attribution analysis: spectral clustering of per-sample
relevance maps plus a planar embedding for inspection.

The numerical kernels (pairwise distances, kNN graph, normalized
Laplacian, Jacobi eigensolver, k-means, exact t-SNE, separability
scoring) are deliberately self-contained and deterministic given their
seeds; the pipeline wires them together with disk caching so re-running
an analysis recomputes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import pipeline as pl
from .errors import (
    AsymmetricInput,
    BadK,
    NoConvergence,
    NotSymmetric,
    PerplexityTooLarge,
    ShapeMismatch,
    SingleCluster,
)
from .rng import derive_seed
from .tensor import Tensor


def pairwise_distances(X: Tensor) -> Tensor:
    """Euclidean distance matrix; symmetric with an exactly zero diagonal."""
    if X.ndim != 2:
        raise ShapeMismatch(f"expected N x D samples, got {X.shape}")
    A = X.data.astype(np.float64)
    sq = np.einsum("ij,ij->i", A, A)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (A @ A.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return Tensor(d)


def knn_affinity(D: Tensor, k: int) -> Tensor:
    """Binary k-nearest-neighbour graph, symmetrized with max(W, W^T).

    Distance ties resolve toward the lower sample index.
    """
    n = D.shape[0]
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ShapeMismatch(f"distance matrix must be square, got {D.shape}")
    if not 1 <= k < n:
        raise BadK(f"k={k} outside [1, {n - 1}]")
    d = D.data.copy()
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    W = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    W[rows, order[:, :k].reshape(-1)] = 1.0
    return Tensor(np.maximum(W, W.T))


def normalized_laplacian(W: Tensor) -> Tensor:
    """L = I - D^{-1/2} W D^{-1/2}; isolated vertices get a zero row."""
    A = W.data
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"affinity must be square, got {W.shape}")
    if not np.array_equal(A, A.T) or np.any(A < 0):
        raise AsymmetricInput("affinity must be symmetric and non-negative")
    deg = A.sum(axis=1)
    inv = np.zeros_like(deg)
    np.divide(1.0, np.sqrt(deg), out=inv, where=deg > 0)
    L = -inv[:, None] * A * inv[None, :]
    np.fill_diagonal(L, np.where(deg > 0, 1.0, 0.0))
    # averaging with the transpose makes symmetry exact, not just up to
    # rounding, so the eigensolver's symmetry check can be strict
    L = (L + L.T) / 2.0
    return Tensor(L)


def eig_smallest(L: Tensor, m: int) -> tuple[Tensor, Tensor]:
    """Smallest m eigenpairs of a symmetric matrix via cyclic Jacobi.

    Runs full sweeps until the off-diagonal Frobenius norm drops below
    1e-10. Eigenvalues come back ascending; each eigenvector's sign is
    fixed so its largest-magnitude component is positive.
    """
    A = L.data.astype(np.float64).copy()
    n = A.shape[0]
    if L.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"matrix must be square, got {L.shape}")
    if not np.array_equal(A, A.T):
        raise NotSymmetric("eig_smallest needs a symmetric matrix")
    if m > n:
        raise ShapeMismatch(f"m={m} exceeds matrix size {n}")

    tol = 1e-10
    V = np.eye(n)
    if n > 1:
        skip = tol / (2 * n)
        max_sweeps = 100
        sweeps = 0
        while True:
            # summing the off-diagonal squares directly avoids the
            # cancellation that sum(A^2) - sum(diag^2) suffers near zero
            B = A.copy()
            np.fill_diagonal(B, 0.0)
            off = np.sqrt(np.sum(B * B))
            if off < tol:
                break
            if sweeps >= max_sweeps:
                raise NoConvergence(sweeps)
            sweeps += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if abs(apq) <= skip:
                        continue
                    tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                    if tau >= 0:
                        t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = t * c
                    rp, rq = A[p, :].copy(), A[q, :].copy()
                    A[p, :] = c * rp - s * rq
                    A[q, :] = s * rp + c * rq
                    cp, cq = A[:, p].copy(), A[:, q].copy()
                    A[:, p] = c * cp - s * cq
                    A[:, q] = s * cp + c * cq
                    A[p, q] = A[q, p] = 0.0
                    vp, vq = V[:, p].copy(), V[:, q].copy()
                    V[:, p] = c * vp - s * vq
                    V[:, q] = s * vp + c * vq

    values = np.diag(A).copy()
    order = np.argsort(values, kind="stable")[:m]
    values = values[order]
    vectors = V[:, order]
    flips = np.sign(vectors[np.abs(vectors).argmax(axis=0), np.arange(m)])
    flips[flips == 0] = 1.0
    return Tensor(values), Tensor(vectors * flips)


def _kmeans_once(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=np.int64)
    prev_inertia = np.inf
    for _ in range(max_iter):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist.argmin(axis=1)
        inertia = dist[np.arange(n), new_labels].sum()
        # Lloyd steps never increase the objective; a reseed below resets
        # the baseline because the guarantee only covers pure steps
        assert inertia <= prev_inertia * (1 + 1e-12) + 1e-12, "inertia increased"
        prev_inertia = inertia
        reseeded = False
        reseed_dist = dist[np.arange(n), new_labels].copy()
        for j in range(k):
            if not np.any(new_labels == j):
                farthest = int(reseed_dist.argmax())
                centers[j] = X[farthest]
                new_labels[farthest] = j
                reseed_dist[farthest] = -1.0
                reseeded = True
        if reseeded:
            prev_inertia = np.inf
        if np.array_equal(new_labels, labels) and not reseeded:
            labels = new_labels
            break
        labels = new_labels
        for j in range(k):
            centers[j] = X[labels == j].mean(axis=0)
    dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    inertia = dist[np.arange(n), labels].sum()
    return labels, inertia


def kmeans(X: Tensor, k: int, seed: int, restarts: int = 10, max_iter: int = 300) -> Tensor:
    """Best-of-restarts k-means++ with Lloyd refinement."""
    if X.ndim != 2:
        raise ShapeMismatch(f"expected N x d, got {X.shape}")
    n = X.shape[0]
    if not 2 <= k <= n:
        raise BadK(f"k={k} outside [2, {n}]")
    data = X.data.astype(np.float64)
    best_labels, best_inertia = None, np.inf
    for r in range(restarts):
        rng = np.random.default_rng(derive_seed(seed, "restart", str(r)))
        labels, inertia = _kmeans_once(data, k, rng, max_iter)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return Tensor(best_labels, dtype="i64")


def _conditional_probabilities(d2: np.ndarray, perplexity: float) -> np.ndarray:
    """Per-row precisions found by binary search so each row's entropy
    matches log(perplexity) within 1e-5 (at most 50 halvings)."""
    n = d2.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        di = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(50):
            ex = np.exp(-di * beta)
            total = ex.sum()
            if total <= 0:
                h = 0.0
                pi = np.zeros_like(ex)
            else:
                pi = ex / total
                h = np.log(total) + beta * (di * ex).sum() / total
            diff = h - target
            if abs(diff) < 1e-5:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == 0.0 else (beta + lo) / 2.0
        P[i, np.arange(n) != i] = pi
    return P


def tsne(X: Tensor, perplexity: float, iters: int, seed: int) -> tuple[Tensor, Tensor]:
    """Exact symmetric-SNE planar embedding.

    Returns (Y, kl_trace); the trace holds the KL divergence against the
    true (never exaggerated) joint distribution after every iteration.
    """
    if X.ndim != 2:
        raise ShapeMismatch(f"expected N x D, got {X.shape}")
    n = X.shape[0]
    if n < 3 * perplexity + 1:
        raise PerplexityTooLarge(f"perplexity {perplexity} needs at least {int(3 * perplexity + 1)} samples, got {n}")

    A = X.data.astype(np.float64)
    sq = np.einsum("ij,ij->i", A, A)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (A @ A.T), 0.0)
    cond = _conditional_probabilities(d2, perplexity)
    P = (cond + cond.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)

    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(n, 2)) * 1e-4
    velocity = np.zeros_like(Y)
    lr = 200.0
    exaggeration_until = min(250, iters)
    trace = np.empty(iters)
    logP = np.log(P)
    for it in range(iters):
        Pit = P * 12.0 if it < exaggeration_until else P
        ydiff = Y[:, None, :] - Y[None, :, :]
        num = 1.0 / (1.0 + (ydiff**2).sum(axis=2))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        grad = 4.0 * np.einsum("ij,ijk->ik", (Pit - Q) * num, ydiff)
        momentum = 0.5 if it < 250 else 0.8
        velocity = momentum * velocity - lr * grad
        Y = Y + velocity
        ydiff = Y[:, None, :] - Y[None, :, :]
        num = 1.0 / (1.0 + (ydiff**2).sum(axis=2))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        trace[it] = float((P * (logP - np.log(Q))).sum())
    return Tensor(Y), Tensor(trace)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def separability_score(embedding: Tensor, labels: Tensor, seed: int = 0) -> float:
    """Mean balanced training accuracy of one-vs-rest logistic probes.

    High scores mean the clusters are linearly separable in the
    embedding, which is the ranking signal for which categories deserve
    a closer look.
    """
    if embedding.ndim != 2 or labels.ndim != 1 or embedding.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"embedding {embedding.shape} vs labels {labels.shape}")
    X = embedding.data.astype(np.float64)
    y_all = labels.data.astype(np.int64)
    classes = np.unique(y_all)
    if classes.size < 2:
        raise SingleCluster("separability needs at least two distinct labels")
    # Standardize columns so the fixed step size works at any feature
    # scale (eigenvector entries are O(1/sqrt(N)), raw coordinates O(1)).
    sd = X.std(axis=0)
    X = (X - X.mean(axis=0)) / np.where(sd < 1e-12, 1.0, sd)
    Xb = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
    accs = []
    for c in classes:
        y = (y_all == c).astype(np.float64)
        rng = np.random.default_rng(derive_seed(seed, "probe", str(int(c))))
        w = rng.normal(0.0, 0.01, size=Xb.shape[1])
        for _ in range(500):
            p = _sigmoid(Xb @ w)
            w -= 0.1 * (Xb.T @ (p - y)) / Xb.shape[0]
        pred = _sigmoid(Xb @ w) >= 0.5
        tpr = pred[y == 1].mean() if np.any(y == 1) else 0.0
        tnr = (~pred[y == 0]).mean() if np.any(y == 0) else 0.0
        accs.append((tpr + tnr) / 2.0)
    return float(np.mean(accs))


# -- pipeline processors ------------------------------------------------

class FlattenSamples(pl.Processor):
    """N x ... -> N x D, f64."""

    def function(self, value: Tensor) -> Tensor:
        n = value.shape[0]
        return Tensor(value.data.reshape(n, -1).astype(np.float64))


class PairwiseDistances(pl.Processor):
    def function(self, value: Tensor) -> Tensor:
        return pairwise_distances(value)


class KnnAffinity(pl.Processor):
    k = pl.Param("int", 10)

    def function(self, value: Tensor) -> Tensor:
        return knn_affinity(value, self.k)


class NormalizedLaplacian(pl.Processor):
    def function(self, value: Tensor) -> Tensor:
        return normalized_laplacian(value)


class EigenDecomposition(pl.Processor):
    n_eigval = pl.Param("int", 8)

    def function(self, value: Tensor):
        values, vectors = eig_smallest(value, self.n_eigval)
        return (values, vectors)


class TakeVectors(pl.Processor):
    """Projects the (eigenvalues, eigenvectors) pair onto the vectors."""

    def function(self, value):
        return value[1]


class KMeans(pl.Processor):
    n_clusters = pl.Param("int", 2)
    seed = pl.Param("int", 0)

    def function(self, value: Tensor) -> Tensor:
        return kmeans(value, self.n_clusters, self.seed)


class TSNEEmbedding(pl.Processor):
    perplexity = pl.Param("float", 30.0)
    iters = pl.Param("int", 1000)
    seed = pl.Param("int", 0)

    def function(self, value: Tensor):
        return tsne(value, self.perplexity, self.iters, self.seed)


class Separability(pl.Processor):
    seed = pl.Param("int", 0)

    def function(self, value):
        embedding, labels = value
        return separability_score(embedding, labels, self.seed)


@dataclass
class AnalysisParams:
    knn_k: int = 10
    n_eigval: int = 8
    kmeans_range: list = field(default_factory=lambda: list(range(2, 20)))
    tsne_perplexity: float = 30.0
    tsne_iters: int = 1000
    tsne_on: str = "raw"
    seed: int = 0

    def __post_init__(self):
        if self.knn_k < 1:
            raise BadK(f"knn_k={self.knn_k}")
        if self.n_eigval < 2:
            raise ValueError(f"n_eigval={self.n_eigval} must be >= 2")
        if any(k < 2 for k in self.kmeans_range):
            raise BadK(f"kmeans_range {self.kmeans_range} has k < 2")
        if self.tsne_perplexity <= 0:
            raise ValueError("tsne_perplexity must be > 0")
        if self.tsne_on not in ("raw", "spectral"):
            raise ValueError(f"tsne_on must be 'raw' or 'spectral', got {self.tsne_on!r}")


@dataclass
class EmbeddingResult:
    points: Tensor
    eigenvalues: Optional[Tensor] = None
    base: Optional[str] = None


@dataclass
class ClusteringResult:
    labels: Tensor
    base: str
    params: dict = field(default_factory=dict)


@dataclass
class CategoryAnalysis:
    index: np.ndarray
    embeddings: dict
    clusterings: dict
    scores: dict

    def validate(self):
        n = self.index.shape[0]
        for name, emb in self.embeddings.items():
            if emb.points.shape[0] != n:
                raise ShapeMismatch(f"embedding {name!r} has {emb.points.shape[0]} rows, index has {n}")
            if emb.base is not None and emb.base not in self.embeddings:
                raise ShapeMismatch(f"embedding {name!r} references unknown base {emb.base!r}")
        for name, cl in self.clusterings.items():
            if cl.labels.shape[0] != n:
                raise ShapeMismatch(f"clustering {name!r} has {cl.labels.shape[0]} labels, index has {n}")
            if cl.base not in self.embeddings:
                raise ShapeMismatch(f"clustering {name!r} references unknown base {cl.base!r}")
            k = cl.params.get("n_clusters")
            lab = cl.labels.data
            if lab.size and (lab.min() < 0 or (k is not None and lab.max() >= k)):
                raise ShapeMismatch(f"clustering {name!r} labels outside [0, {k})")
        return self


def spray_pipeline(
    attributions: Tensor,
    params: AnalysisParams,
    io: Optional[pl.CacheStore] = None,
    index: Optional[np.ndarray] = None,
) -> CategoryAnalysis:
    """Spectral analysis of a stack of attribution maps.

    Affinity, Laplacian, eigendecomposition and the k-means sweep run on
    the spectral embedding; t-SNE runs on raw flattened maps or on the
    spectral rows per params.tsne_on. Every processor is disk-cached
    when a store is given, so repeated runs recompute nothing.
    """
    n = attributions.shape[0]
    if n < params.n_eigval:
        raise ShapeMismatch(f"{n} samples but n_eigval={params.n_eigval}")
    if params.knn_k >= n:
        raise BadK(f"knn_k={params.knn_k} needs more than {params.knn_k} samples, got {n}")
    if n < 3 * params.tsne_perplexity + 1:
        raise PerplexityTooLarge(
            f"perplexity {params.tsne_perplexity} needs at least {int(3 * params.tsne_perplexity + 1)} samples, got {n}"
        )
    seed = params.seed

    sweep = pl.parallel(
        [
            KMeans(n_clusters=k, seed=derive_seed(seed, "kmeans", str(k)), io=io)
            for k in params.kmeans_range
        ],
        broadcast=True,
    )
    main = pl.Pipeline(
        [
            pl.Task("preprocess", FlattenSamples(io=io)),
            pl.Task("distance", PairwiseDistances(io=io)),
            pl.Task("affinity", KnnAffinity(k=params.knn_k, io=io)),
            pl.Task("laplacian", NormalizedLaplacian(io=io)),
            pl.Task("embedding", EigenDecomposition(n_eigval=params.n_eigval, io=io, is_output=True)),
            pl.Task("clustering", pl.sequential([TakeVectors(io=io), sweep], is_output=True)),
        ]
    )
    (eigvals, eigvecs), labelings = main(attributions)

    tsne_proc = TSNEEmbedding(
        perplexity=params.tsne_perplexity,
        iters=params.tsne_iters,
        seed=derive_seed(seed, "tsne"),
        io=io,
    )
    if params.tsne_on == "spectral":
        tsne_y, _ = pl.Pipeline([pl.Task("tsne", tsne_proc)])(eigvecs)
        tsne_base = "spectral"
    else:
        flat_then_tsne = pl.Pipeline(
            [pl.Task("preprocess", FlattenSamples(io=io)), pl.Task("tsne", tsne_proc)]
        )
        tsne_y, _ = flat_then_tsne(attributions)
        tsne_base = None

    embeddings = {
        "spectral": EmbeddingResult(points=eigvecs, eigenvalues=eigvals),
        "tsne": EmbeddingResult(points=tsne_y, base=tsne_base),
    }
    clusterings = {}
    scores = {}
    sep = Separability(seed=derive_seed(seed, "separability"), io=io)
    for k, labels in zip(params.kmeans_range, labelings):
        name = f"kmeans-{k}"
        clusterings[name] = ClusteringResult(labels=labels, base="spectral", params={"n_clusters": k})
        scores[f"separability/{name}"] = sep((eigvecs, labels))

    analysis = CategoryAnalysis(
        index=np.arange(n, dtype=np.int64) if index is None else np.asarray(index, dtype=np.int64),
        embeddings=embeddings,
        clusterings=clusterings,
        scores=scores,
    )
    return analysis.validate()
