"""Cosine k-means over standardized, L2-normalized embeddings, plus
internal validity metrics.

Standardize-then-normalize makes Euclidean k-means equivalent to optimizing
cosine similarity, via ||x - y||^2 = 2(1 - cos(x, y)) for unit vectors.
Lloyd's algorithm uses k-means++ seeding, a fixed number of restarts with
derived seeds, and empty-cluster repair by promoting the point farthest
from its centroid; everything is deterministic given the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import seeded_rng
from .errors import DataError


@dataclass
class ClusterReport:
    k: int
    assignments: dict[str, int]
    centroids: np.ndarray                  # (k, d) in normalized space
    inertia: float
    silhouette: float | None = None
    calinski_harabasz: float | None = None
    seed: int = 0
    cluster_sizes: list[int] = field(default_factory=list)

    def to_json(self, path: str | Path) -> None:
        ch: float | str | None = self.calinski_harabasz
        if ch is not None and math.isinf(ch):
            ch = "inf"
        doc = {
            "k": self.k,
            "seed": self.seed,
            "inertia": self.inertia,
            "silhouette": self.silhouette,
            "calinski_harabasz": ch,
            "cluster_sizes": self.cluster_sizes,
            "assignments": self.assignments,
            "centroids": [[float(v) for v in row] for row in self.centroids],
        }
        Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "ClusterReport":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        ch = doc["calinski_harabasz"]
        if ch == "inf":
            ch = float("inf")
        return cls(k=int(doc["k"]), assignments={str(k): int(v) for k, v in doc["assignments"].items()},
                   centroids=np.asarray(doc["centroids"], dtype=np.float64),
                   inertia=float(doc["inertia"]),
                   silhouette=None if doc["silhouette"] is None else float(doc["silhouette"]),
                   calinski_harabasz=None if ch is None else float(ch),
                   seed=int(doc["seed"]), cluster_sizes=[int(s) for s in doc["cluster_sizes"]])


def standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero-mean unit-variance per dimension; zero-variance columns pass
    through untouched (recorded with mean 0, std 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("standardize needs an (n >= 2, d) matrix")
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    constant = stds == 0.0
    means = np.where(constant, 0.0, means)
    stds = np.where(constant, 1.0, stds)
    return (x - means) / stds, means, stds


def l2_normalize_rows(x: np.ndarray, ids: list[str] | None = None) -> np.ndarray:
    """Scale each row to unit L2 norm; zero rows are an error."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        which = ids[bad[0]] if ids is not None else f"row {bad[0]}"
        raise DataError(f"degenerate embedding: zero vector for {which}")
    return x / norms[:, None]


def _pairwise_sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    sq = (x * x).sum(axis=1)[:, None] + (y * y).sum(axis=1)[None, :] - 2.0 * (x @ y.T)
    return np.maximum(sq, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = _pairwise_sq_dists(x, centers[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total == 0.0:
            centers[j] = x[int(rng.integers(n))]
            continue
        centers[j] = x[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, _pairwise_sq_dists(x, centers[j:j + 1]).ravel())
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, float]:
    k = len(centers)
    assign = np.full(len(x), -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(x, centers)
        new_assign = d2.argmin(axis=1)
        # repair empty clusters with the globally farthest point
        for j in range(k):
            if not np.any(new_assign == j):
                dist_to_own = d2[np.arange(len(x)), new_assign]
                far = int(dist_to_own.argmax())
                new_assign[far] = j
                centers[j] = x[far]
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            centers[j] = x[assign == j].mean(axis=0)
    d2 = _pairwise_sq_dists(x, centers)
    inertia = float(d2[np.arange(len(x)), assign].sum())
    return assign, centers, inertia


def kmeans(x_hat: np.ndarray, k: int, seed: int = 0, n_init: int = 10,
           max_iter: int = 300, ids: list[str] | None = None,
           compute_metrics: bool = True) -> ClusterReport:
    """Lloyd's algorithm with k-means++ restarts on unit-norm rows."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    n = len(x_hat)
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if k > n:
        raise DataError(f"k ({k}) cannot exceed the number of points ({n})")
    if ids is None:
        ids = [str(i) for i in range(n)]
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    for restart in range(n_init):
        rng = seeded_rng(seed, "kmeans-restart", restart)
        assign, centers, inertia = _lloyd(x_hat, _kmeans_pp_init(x_hat, k, rng), max_iter)
        if best is None or inertia < best[0]:
            best = (inertia, assign, centers)
    inertia, assign, centers = best
    sil = silhouette(x_hat, assign) if compute_metrics and k >= 2 else None
    ch = calinski_harabasz(x_hat, assign) if compute_metrics and 2 <= k < n else None
    sizes = [int(np.sum(assign == j)) for j in range(k)]
    return ClusterReport(k=k, assignments={ids[i]: int(assign[i]) for i in range(n)},
                         centroids=centers, inertia=inertia, silhouette=sil,
                         calinski_harabasz=ch, seed=seed, cluster_sizes=sizes)


def silhouette(x: np.ndarray, assignments: np.ndarray) -> float:
    """Mean silhouette coefficient with Euclidean distance.

    Singleton-cluster points score 0, as do points where a == b == 0.
    """
    x = np.asarray(x, dtype=np.float64)
    assignments = np.asarray(assignments, dtype=np.int64)
    labels = np.unique(assignments)
    if len(labels) < 2:
        raise DataError("silhouette needs at least 2 clusters")
    d = np.sqrt(_pairwise_sq_dists(x, x))
    n = len(x)
    scores = np.zeros(n)
    masks = {j: assignments == j for j in labels}
    for i in range(n):
        own = masks[assignments[i]]
        n_own = int(own.sum())
        if n_own <= 1:
            continue
        a = d[i, own].sum() / (n_own - 1)
        b = min(d[i, masks[j]].mean() for j in labels if j != assignments[i])
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())


def calinski_harabasz(x: np.ndarray, assignments: np.ndarray) -> float:
    """Between/within dispersion ratio; returns +inf when within == 0."""
    x = np.asarray(x, dtype=np.float64)
    assignments = np.asarray(assignments, dtype=np.int64)
    labels = np.unique(assignments)
    n, k = len(x), len(labels)
    if not 2 <= k < n:
        raise DataError(f"calinski-harabasz needs 2 <= k < n, got k={k}, n={n}")
    overall = x.mean(axis=0)
    between = 0.0
    within = 0.0
    for j in labels:
        members = x[assignments == j]
        centroid = members.mean(axis=0)
        between += len(members) * float(((centroid - overall) ** 2).sum())
        within += float(((members - centroid) ** 2).sum())
    if within == 0.0:
        return float("inf")
    return (between / (k - 1)) / (within / (n - k))


def cluster_purity(assignments: dict[str, int], labels: dict[str, int]) -> float | None:
    """Fraction of labeled members whose cluster's majority label matches
    their own; None when no member is labeled."""
    by_cluster: dict[int, list[int]] = {}
    for pid, cluster in assignments.items():
        label = labels.get(pid)
        if label is None:
            continue
        by_cluster.setdefault(cluster, []).append(label)
    total = sum(len(v) for v in by_cluster.values())
    if total == 0:
        return None
    agree = 0
    for members in by_cluster.values():
        counts: dict[int, int] = {}
        for lab in members:
            counts[lab] = counts.get(lab, 0) + 1
        agree += max(counts.values())
    return agree / total
