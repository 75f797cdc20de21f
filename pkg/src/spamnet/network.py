"""Influence networks from fitted models, and spectral clustering of them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import NetworkFit

ISOLATED = -1


@dataclass(frozen=True)
class ClusterConfig:
    k: int
    lambda_cov: float = 0.0
    seed: int = 0
    kmeans_restarts: int = 10
    max_iter: int = 300

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need k >= 2 clusters")
        if self.lambda_cov < 0:
            raise ValueError("lambda_cov must be nonnegative")
        if self.kmeans_restarts < 1:
            raise ValueError("need at least one k-means restart")


def adjacency(fit: NetworkFit, threshold: float = 0.0) -> np.ndarray:
    """``A[j, k] = 1`` iff block ``(j, k)`` has a norm above ``threshold``."""
    return fit.adjacency(threshold)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    history: list


def _kmeans_once(Y, k, rng, max_iter) -> KMeansResult:
    n = Y.shape[0]
    # k-means++ seeding
    centers = [Y[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((Y[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(Y[idx])
    centers = np.array(centers, dtype=float)
    history = []
    labels = None
    for _ in range(max_iter):
        dist = ((Y[:, None, :] - centers[None]) ** 2).sum(-1)
        new = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(n), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            # an empty cluster takes the worst-served point of a shared cluster
            cand = np.flatnonzero(counts[labels] > 1)
            far = int(cand[np.argmax(dist[cand, labels[cand]])])
            counts[labels[far]] -= 1
            labels[far] = c
            counts[c] = 1
        for c in range(k):
            centers[c] = Y[labels == c].mean(axis=0)
    inertia = float(((Y - centers[labels]) ** 2).sum())
    history.append(inertia)
    return KMeansResult(labels, centers, inertia, history)


def kmeans(Y, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with k-means++ starts; keeps the lowest-inertia run."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] < k:
        raise ValueError(f"cannot form {k} clusters from {Y.shape[0]} points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        res = _kmeans_once(Y, k, rng, max_iter)
        if best is None or res.inertia < best.inertia - 1e-12:
            best = res
    return best


def canonical_labels(labels) -> np.ndarray:
    """Relabel clusters in order of first appearance; sentinels are kept."""
    labels = np.asarray(labels)
    out = np.full(labels.shape, ISOLATED)
    mapping = {}
    for i, lab in enumerate(labels):
        if lab == ISOLATED:
            continue
        out[i] = mapping.setdefault(lab, len(mapping))
    return out


def _cluster_rows(E: np.ndarray, cfg: ClusterConfig) -> np.ndarray:
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    E = np.divide(E, norms, out=np.zeros_like(E), where=norms > 1e-12)
    E = np.round(E, 10)  # merge numerically identical rows
    uniq, inverse = np.unique(E, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    if len(uniq) <= cfg.k:
        return canonical_labels(inverse)
    res = kmeans(E, cfg.k, seed=cfg.seed, restarts=cfg.kmeans_restarts, max_iter=cfg.max_iter)
    return canonical_labels(res.labels)


def symmetrize(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    return 0.5 * (A + A.T)


def spectral_cluster(A, cfg: ClusterConfig) -> np.ndarray:
    """Normalized-Laplacian spectral clustering of ``(A + A^T)/2``.

    Zero-degree nodes get the label ``ISOLATED`` (-1).
    """
    S = symmetrize(A)
    deg = S.sum(axis=1)
    active = np.flatnonzero(deg > 0)
    if cfg.k > len(active):
        raise ValueError(f"k={cfg.k} exceeds the {len(active)} non-isolated nodes")
    Sa = S[np.ix_(active, active)]
    inv_sqrt = 1.0 / np.sqrt(deg[active])
    L = np.eye(len(active)) - inv_sqrt[:, None] * Sa * inv_sqrt[None, :]
    _, vecs = np.linalg.eigh(0.5 * (L + L.T))
    labels = np.full(S.shape[0], ISOLATED)
    labels[active] = _cluster_rows(vecs[:, : cfg.k], cfg)
    return canonical_labels(labels)


def assisted_operator(A, coords, lambda_cov: float) -> np.ndarray:
    """Similarity ``(A + A^T)/2 + lambda_cov * coords coords^T``."""
    S = symmetrize(A)
    C = np.asarray(coords, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    if C.shape[0] != S.shape[0]:
        raise ValueError("coords must have one row per node")
    return S + lambda_cov * (C @ C.T)


def covariate_cluster(A, coords, cfg: ClusterConfig) -> np.ndarray:
    """Cluster on the top-k eigenvectors of the covariate-assisted similarity."""
    W = assisted_operator(A, coords, cfg.lambda_cov)
    if cfg.k > W.shape[0]:
        raise ValueError(f"k={cfg.k} exceeds the number of nodes {W.shape[0]}")
    _, vecs = np.linalg.eigh(0.5 * (W + W.T))
    return _cluster_rows(vecs[:, ::-1][:, : cfg.k], cfg)
