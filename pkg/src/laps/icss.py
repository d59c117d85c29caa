"""Intra-cluster semantic similarity from externally supplied frame
features.

Per primitive, raw frame feature vectors are pooled weighted by their own
norms, which collapses to normalize(sum of raw features), and the result is
a unit descriptor. Within each cluster, unordered distinct pairs are
sampled uniformly without replacement (all pairs when the budget allows)
and their mean and population std of cosine similarity reported. The
baseline draws the same total number of pairs from the whole descriptor
pool, ignoring clusters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import seeded_rng
from .errors import DataError


@dataclass
class PairStats:
    mean: float | None
    std: float | None
    n_pairs: int


@dataclass
class IcssReport:
    per_cluster: dict[int, PairStats]
    overall: PairStats
    baseline: PairStats
    pair_budget: int
    seed: int
    audit: list[tuple[str, str, str, float]] = field(default_factory=list)

    def to_json(self, path: str | Path) -> None:
        def stats(s: PairStats) -> dict:
            return {"mean": s.mean, "std": s.std, "n_pairs": s.n_pairs}

        doc = {
            "pair_budget": self.pair_budget,
            "seed": self.seed,
            "per_cluster": {str(k): stats(v) for k, v in sorted(self.per_cluster.items())},
            "overall": stats(self.overall),
            "baseline": stats(self.baseline),
        }
        Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")

    def write_audit(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group", "id_a", "id_b", "cosine"])
            writer.writerows(self.audit)


def norm_weighted_pool(frames: np.ndarray) -> np.ndarray:
    """Pool raw frame features into one unit descriptor.

    Weighting unit frames by their raw norms equals summing the raw
    features, so v = normalize(sum_f u_f).
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise DataError("need a non-empty (m, d) frame feature matrix")
    norms = np.linalg.norm(frames, axis=1)
    if np.any(norms == 0.0):
        raise DataError("zero frame feature vector cannot be pooled")
    pooled = frames.sum(axis=0)
    total = float(np.linalg.norm(pooled))
    if total == 0.0:
        raise DataError("frame features cancel out; descriptor undefined")
    return pooled / total


def sample_pairs(cluster_members: list, budget: int, seed: int) -> list[tuple]:
    """Uniformly sample up to ``budget`` unordered distinct member pairs."""
    members = list(cluster_members)
    n = len(members)
    if n < 2:
        raise DataError("cluster too small for ICSS (needs >= 2 members)")
    if budget < 1:
        raise DataError("pair budget must be >= 1")
    total = n * (n - 1) // 2
    if total <= budget:
        chosen = np.arange(total)
    else:
        chosen = seeded_rng(seed, "icss-pairs", n).choice(total, size=budget, replace=False)
        chosen.sort()
    # decode linear index into the upper triangle (i < j)
    pairs = []
    for idx in chosen:
        i = int((2 * n - 1 - np.sqrt((2 * n - 1) ** 2 - 8 * idx)) // 2)
        j = int(idx - i * (2 * n - i - 1) // 2 + i + 1)
        pairs.append((members[i], members[j]))
    return pairs


def _cosines(descriptors: dict[str, np.ndarray], pairs: list[tuple[str, str]]) -> np.ndarray:
    return np.asarray([float(descriptors[a] @ descriptors[b]) for a, b in pairs])


def _stats(values: np.ndarray) -> PairStats:
    if values.size == 0:
        return PairStats(mean=None, std=None, n_pairs=0)
    return PairStats(mean=float(values.mean()), std=float(values.std()), n_pairs=int(values.size))


def icss(descriptors: dict[str, np.ndarray], assignments: dict[str, int],
         budget: int = 2000, seed: int = 0) -> IcssReport:
    """Per-cluster, overall and random-baseline pairwise cosine similarity."""
    missing = [pid for pid in assignments if pid not in descriptors]
    if missing:
        raise DataError(f"no descriptor for cluster member {missing[0]!r}")
    clusters: dict[int, list[str]] = {}
    for pid in sorted(assignments):
        clusters.setdefault(assignments[pid], []).append(pid)

    audit: list[tuple[str, str, str, float]] = []
    per_cluster: dict[int, PairStats] = {}
    pooled: list[np.ndarray] = []
    total_pairs = 0
    for cluster_id in sorted(clusters):
        members = clusters[cluster_id]
        if len(members) < 2:
            per_cluster[cluster_id] = PairStats(mean=None, std=None, n_pairs=0)
            continue
        pairs = sample_pairs(members, budget, seed=seed + cluster_id)
        cos = _cosines(descriptors, pairs)
        per_cluster[cluster_id] = _stats(cos)
        pooled.append(cos)
        total_pairs += len(pairs)
        audit.extend((f"cluster{cluster_id}", a, b, float(c)) for (a, b), c in zip(pairs, cos))

    overall = _stats(np.concatenate(pooled) if pooled else np.empty(0))

    all_ids = sorted(descriptors)
    baseline = PairStats(mean=None, std=None, n_pairs=0)
    if len(all_ids) >= 2 and total_pairs > 0:
        base_pairs = sample_pairs(all_ids, total_pairs, seed=seed - 1)
        base_cos = _cosines(descriptors, base_pairs)
        baseline = _stats(base_cos)
        audit.extend(("baseline", a, b, float(c)) for (a, b), c in zip(base_pairs, base_cos))

    return IcssReport(per_cluster=per_cluster, overall=overall, baseline=baseline,
                      pair_budget=budget, seed=seed, audit=audit)


def descriptors_from_frames(frames_by_primitive: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Pool every primitive's frame features into unit descriptors."""
    return {pid: norm_weighted_pool(mat) for pid, mat in frames_by_primitive.items()}
