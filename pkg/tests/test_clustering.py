import itertools

import numpy as np
import pytest

from laps.clustering import (ClusterReport, calinski_harabasz, cluster_purity, kmeans,
                             l2_normalize_rows, silhouette, standardize)
from laps.clustering import _kmeans_pp_init, _lloyd
from laps.encoder import seeded_rng
from laps.errors import DataError


# ---------------------------------------------------------------------------
# standardize / normalize


def test_standardize_two_points():
    out, means, stds = standardize(np.asarray([[0.0], [2.0]]))
    assert out.tolist() == [[-1.0], [1.0]]
    assert means.tolist() == [1.0] and stds.tolist() == [1.0]


def test_standardize_constant_column_unchanged():
    x = np.asarray([[3.0, 1.0], [3.0, 5.0], [3.0, 0.0]])
    out, means, stds = standardize(x)
    assert np.array_equal(out[:, 0], x[:, 0])
    assert means[0] == 0.0 and stds[0] == 1.0


def test_standardize_columns_centered(rng):
    x = rng.normal(3, 5, size=(40, 6))
    out, _, _ = standardize(x)
    assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
    assert np.allclose(out.std(axis=0), 1.0, atol=1e-9)


def test_standardize_needs_two_rows():
    with pytest.raises(DataError):
        standardize(np.ones((1, 3)))


def test_l2_normalize_hand_case():
    out = l2_normalize_rows(np.asarray([[3.0, 4.0]]))
    assert np.allclose(out, [[0.6, 0.8]], atol=1e-15)


def test_l2_normalize_idempotent_on_unit_rows(rng):
    x = l2_normalize_rows(rng.normal(size=(10, 4)))
    again = l2_normalize_rows(x)
    assert np.allclose(again, x, atol=1e-15)


def test_l2_normalize_zero_row_names_culprit():
    x = np.asarray([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DataError, match="prim_b"):
        l2_normalize_rows(x, ids=["prim_a", "prim_b"])


def test_cosine_equivalence_identity(rng):
    x = l2_normalize_rows(rng.normal(size=(50, 16)))
    for _ in range(100):
        i, j = rng.integers(0, 50, size=2)
        lhs = float(((x[i] - x[j]) ** 2).sum())
        rhs = 2.0 * (1.0 - float(x[i] @ x[j]))
        assert abs(lhs - rhs) <= 1e-9


# ---------------------------------------------------------------------------
# k-means


def test_each_point_its_own_cluster(rng):
    x = l2_normalize_rows(rng.normal(size=(5, 3)))
    report = kmeans(x, k=5, seed=0, n_init=5)
    assert report.inertia <= 1e-12
    assert sorted(report.assignments.values()) == [0, 1, 2, 3, 4]


def test_antipodal_duplicates_split():
    e = np.asarray([1.0, 0.0, 0.0])
    x = np.stack([e, e, e, -e, -e, -e])
    report = kmeans(x, k=2, seed=1, n_init=5)
    labels = [report.assignments[str(i)] for i in range(6)]
    assert labels[0] == labels[1] == labels[2]
    assert labels[3] == labels[4] == labels[5]
    assert labels[0] != labels[3]
    assert report.inertia <= 1e-12


def _exhaustive_best_inertia(x):
    """Optimal 2-partition inertia by enumerating all bipartitions."""
    n = len(x)
    best = np.inf
    for bits in range(1, 2 ** (n - 1)):
        mask = np.asarray([(bits >> i) & 1 for i in range(n)], dtype=bool)
        if mask.all() or not mask.any():
            continue
        inertia = 0.0
        for part in (x[mask], x[~mask]):
            centroid = part.mean(axis=0)
            inertia += float(((part - centroid) ** 2).sum())
        best = min(best, inertia)
    return best


def test_kmeans_matches_exhaustive_small_instances(rng):
    hits = 0
    trials = 25
    for _ in range(trials):
        n = int(rng.integers(4, 13))
        x = l2_normalize_rows(rng.normal(size=(n, 2)))
        report = kmeans(x, k=2, seed=int(rng.integers(1 << 30)), n_init=50)
        if report.inertia <= _exhaustive_best_inertia(x) + 1e-9:
            hits += 1
    assert hits >= int(0.95 * trials)


def test_kmeans_validates_k(rng):
    x = l2_normalize_rows(rng.normal(size=(4, 2)))
    with pytest.raises(DataError):
        kmeans(x, k=5)
    with pytest.raises(DataError):
        kmeans(x, k=0)


def test_lloyd_inertia_monotone_under_iteration_cap(rng):
    x = l2_normalize_rows(rng.normal(size=(60, 4)))
    init = _kmeans_pp_init(x, 4, seeded_rng(9, "init"))
    inertias = [
        _lloyd(x.copy(), init.copy(), max_iter=i)[2] for i in range(1, 8)]
    assert all(a >= b - 1e-12 for a, b in zip(inertias, inertias[1:]))


def test_restart_dominance(rng):
    x = l2_normalize_rows(rng.normal(size=(30, 3)))
    small = kmeans(x, k=3, seed=5, n_init=2)
    large = kmeans(x, k=3, seed=5, n_init=10)
    assert large.inertia <= small.inertia


def test_scaling_invariance_of_assignments(rng):
    raw = rng.normal(size=(20, 5))
    def assign(data):
        std, _, _ = standardize(data)
        report = kmeans(l2_normalize_rows(std), k=3, seed=7, n_init=5)
        return [report.assignments[str(i)] for i in range(len(data))]
    assert assign(raw) == assign(4.0 * raw)   # power of two: exact scaling


def test_kmeans_deterministic(rng):
    x = l2_normalize_rows(rng.normal(size=(25, 4)))
    a = kmeans(x, k=3, seed=11, n_init=4)
    b = kmeans(x, k=3, seed=11, n_init=4)
    assert a.assignments == b.assignments
    assert a.inertia == b.inertia
    assert np.array_equal(a.centroids, b.centroids)


# ---------------------------------------------------------------------------
# silhouette


def test_silhouette_tight_far_groups():
    a = np.tile([0.0, 0.0], (4, 1))
    b = np.tile([100.0, 0.0], (4, 1))
    x = np.concatenate([a, b])
    labels = np.asarray([0] * 4 + [1] * 4)
    assert silhouette(x, labels) == 1.0


def test_silhouette_identical_points_zero():
    x = np.zeros((6, 2))
    labels = np.asarray([0, 0, 0, 1, 1, 1])
    assert silhouette(x, labels) == 0.0


def test_silhouette_matches_naive_reference(rng):
    x = rng.normal(size=(30, 3))
    labels = rng.integers(0, 3, size=30)
    labels[:3] = [0, 1, 2]      # every cluster non-empty

    def naive(x, labels):
        n = len(x)
        scores = []
        for i in range(n):
            same = [j for j in range(n) if labels[j] == labels[i] and j != i]
            if not same:
                scores.append(0.0)
                continue
            a = np.mean([np.linalg.norm(x[i] - x[j]) for j in same])
            b = min(np.mean([np.linalg.norm(x[i] - x[j])
                             for j in range(n) if labels[j] == other])
                    for other in set(labels.tolist()) - {labels[i]})
            scores.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
        return float(np.mean(scores))

    assert abs(silhouette(x, labels) - naive(x, labels)) <= 1e-9


def test_silhouette_needs_two_clusters():
    with pytest.raises(DataError):
        silhouette(np.zeros((4, 2)), np.zeros(4, dtype=int))


# ---------------------------------------------------------------------------
# calinski-harabasz


def test_ch_hand_computed_six_points():
    x = np.asarray([[0, 0], [0, 1], [1, 0], [10, 10], [10, 11], [11, 10]],
                   dtype=np.float64)
    labels = np.asarray([0, 0, 0, 1, 1, 1])
    # W = 8/3, B = 300, CH = (300/1) / ((8/3)/4) = 450
    assert abs(calinski_harabasz(x, labels) - 450.0) <= 1e-9


def test_ch_perfect_separation_is_inf():
    x = np.asarray([[0.0, 0.0]] * 3 + [[5.0, 5.0]] * 3)
    labels = np.asarray([0, 0, 0, 1, 1, 1])
    assert calinski_harabasz(x, labels) == float("inf")


def test_ch_blob_smaller_than_separated(rng):
    blob = rng.normal(size=(40, 2))
    labels = rng.integers(0, 2, size=40)
    labels[:2] = [0, 1]
    separated = np.concatenate([rng.normal(0, 0.1, size=(20, 2)),
                                rng.normal(8, 0.1, size=(20, 2))])
    sep_labels = np.asarray([0] * 20 + [1] * 20)
    assert calinski_harabasz(blob, labels) < calinski_harabasz(separated, sep_labels)


def test_ch_range_validation():
    with pytest.raises(DataError):
        calinski_harabasz(np.zeros((4, 2)), np.zeros(4, dtype=int))


def test_ch_inf_serialized_as_string(tmp_path):
    x = np.asarray([[0.0, 0.0]] * 2 + [[5.0, 5.0]] * 2)
    report = kmeans(l2_normalize_rows(x + 1.0), k=2, seed=0, n_init=2)
    path = tmp_path / "clusters.json"
    report.to_json(path)
    if report.calinski_harabasz == float("inf"):
        assert '"inf"' in path.read_text()
    back = ClusterReport.from_json(path)
    assert back.calinski_harabasz == report.calinski_harabasz


# ---------------------------------------------------------------------------
# purity


def test_cluster_purity():
    assignments = {"a": 0, "b": 0, "c": 1, "d": 1}
    labels = {"a": 5, "b": 5, "c": 7, "d": 5}
    assert cluster_purity(assignments, labels) == 0.75
    assert cluster_purity(assignments, {}) is None
