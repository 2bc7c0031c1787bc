import numpy as np
import pytest

from attnframe.kmeans_index import IndexFormatError, IndexParams, KMeansTree


def exhaustive_nn(points, query, knn=1):
    d2 = ((points.astype(np.float64) - np.asarray(query, dtype=np.float64)) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(len(points)), d2))[:knn]
    return [(int(i), float(d2[i])) for i in order]


def clustered_points(rng, n, dim, n_clusters=20, spread=0.05):
    centers = rng.random((n_clusters, dim))
    assign = rng.integers(0, n_clusters, size=n)
    return (centers[assign] + spread * rng.standard_normal((n, dim))).astype(np.float32)


def test_empty_tree_returns_empty_result():
    tree = KMeansTree.build([], IndexParams(seed=1))
    result = tree.search(np.zeros(8, dtype=np.float32), knn=3)
    assert result.matches == []
    assert len(tree) == 0


def test_small_set_is_single_leaf_and_exact():
    rng = np.random.default_rng(0)
    pts = rng.random((50, 16)).astype(np.float32)
    tree = KMeansTree.build(pts, IndexParams(max_leaf_size=64, seed=1))
    leaves = tree.leaf_point_ids()
    assert len(leaves) == 1
    assert sorted(leaves[0].tolist()) == list(range(50))
    q = rng.random(16).astype(np.float32)
    got = tree.search(q, knn=5, checks=1).matches
    assert got == exhaustive_nn(pts, q, knn=5)


def test_partition_property():
    rng = np.random.default_rng(1)
    pts = rng.random((5000, 32)).astype(np.float32)
    tree = KMeansTree.build(pts, IndexParams(seed=3))
    seen = np.concatenate(tree.leaf_point_ids())
    assert seen.size == 5000
    assert np.array_equal(np.sort(seen), np.arange(5000))


def test_exact_match_with_full_budget():
    rng = np.random.default_rng(2)
    pts = rng.random((1200, 24)).astype(np.float32)
    tree = KMeansTree.build(pts, IndexParams(max_leaf_size=16, seed=4))
    for i in (0, 617, 1199):
        result = tree.search(pts[i], knn=1, checks=len(tree))
        assert result.matches[0] == (i, 0.0)
        assert result.exhaustive


def test_knn_clamped_to_index_size():
    pts = np.array([[0.0, 0.0], [1.0, 1.0]], dtype=np.float32)
    tree = KMeansTree.build(pts, IndexParams(seed=5))
    assert len(tree.search(np.zeros(2, dtype=np.float32), knn=3).matches) == 2


def test_returned_distances_are_true_squared_euclidean():
    rng = np.random.default_rng(3)
    pts = rng.random((800, 40)).astype(np.float32)
    tree = KMeansTree.build(pts, IndexParams(max_leaf_size=32, seed=6))
    q = rng.random(40).astype(np.float32)
    for pid, dist in tree.search(q, knn=10, checks=256).matches:
        expected = float(((pts[pid].astype(np.float64) - q.astype(np.float64)) ** 2).sum())
        assert dist == expected


def test_distances_non_decreasing_and_ids_unique():
    rng = np.random.default_rng(4)
    pts = rng.random((600, 16)).astype(np.float32)
    tree = KMeansTree.build(pts, IndexParams(max_leaf_size=8, seed=7))
    matches = tree.search(rng.random(16).astype(np.float32), knn=20, checks=64).matches
    dists = [d for _, d in matches]
    assert dists == sorted(dists)
    ids = [i for i, _ in matches]
    assert len(set(ids)) == len(ids)


def test_build_determinism():
    rng = np.random.default_rng(5)
    pts = rng.random((3000, 32)).astype(np.float32)
    params = IndexParams(seed=11)
    a = KMeansTree.build(pts, params)
    b = KMeansTree.build(pts, params)
    leaves_a, leaves_b = a.leaf_point_ids(), b.leaf_point_ids()
    assert len(leaves_a) == len(leaves_b)
    for la, lb in zip(leaves_a, leaves_b):
        assert np.array_equal(la, lb)
    q = rng.random(32).astype(np.float32)
    assert a.search(q, knn=5).matches == b.search(q, knn=5).matches


def test_seed_changes_partition():
    rng = np.random.default_rng(6)
    pts = rng.random((3000, 32)).astype(np.float32)
    a = KMeansTree.build(pts, IndexParams(seed=1))
    b = KMeansTree.build(pts, IndexParams(seed=2))
    same = all(
        np.array_equal(la, lb) for la, lb in zip(a.leaf_point_ids(), b.leaf_point_ids())
    ) and len(a.leaf_point_ids()) == len(b.leaf_point_ids())
    assert not same


def test_duplicate_points_terminate_as_leaf():
    pts = np.ones((500, 8), dtype=np.float32)
    tree = KMeansTree.build(pts, IndexParams(max_leaf_size=16, seed=8))
    assert sum(len(l) for l in tree.leaf_point_ids()) == 500
    result = tree.search(np.ones(8, dtype=np.float32), knn=3, checks=500)
    assert all(d == 0.0 for _, d in result.matches)


def test_inconsistent_descriptor_lengths_rejected():
    with pytest.raises(ValueError, match="length"):
        KMeansTree.build([np.zeros(4, dtype=np.float32), np.zeros(5, dtype=np.float32)])


def test_query_dimension_mismatch_rejected():
    tree = KMeansTree.build(np.zeros((10, 8), dtype=np.float32), IndexParams(seed=1))
    with pytest.raises(ValueError, match="dim"):
        tree.search(np.zeros(9, dtype=np.float32), knn=1)


def test_insert_then_search_finds_point():
    rng = np.random.default_rng(7)
    tree = KMeansTree(IndexParams(seed=9))
    vectors = rng.random((40, 12)).astype(np.float32)
    for v in vectors:
        tree.insert(v)
    result = tree.search(vectors[17], knn=1, checks=len(tree))
    assert result.matches[0] == (17, 0.0)


def test_insert_conservation_and_rebuild():
    rng = np.random.default_rng(8)
    tree = KMeansTree(IndexParams(seed=10))
    for _ in range(1000):
        tree.insert(rng.random(8).astype(np.float32))
    assert len(tree) == 1000
    # rebuilds happened: tree structure holds most points, buffer the rest
    assert tree._tree_points.shape[0] > 0
    assert np.concatenate(tree.leaf_point_ids()).size == tree._tree_points.shape[0]
    # every id still retrievable exactly
    pts = tree.all_points()
    result = tree.search(pts[123], knn=1, checks=len(tree))
    assert result.matches[0][1] == 0.0


def test_mixed_workload_recall_close_to_batch():
    rng = np.random.default_rng(9)
    pts = clustered_points(rng, 1500, 64)
    queries = pts[rng.choice(1500, 60, replace=False)] + \
        (0.01 * rng.standard_normal((60, 64))).astype(np.float32)

    params = IndexParams(max_leaf_size=16, seed=12)
    batch = KMeansTree.build(pts, params)
    incremental = KMeansTree(params)
    for v in pts:
        incremental.insert(v)

    def recall(tree):
        hits = 0
        for q in queries:
            truth = exhaustive_nn(pts, q, knn=1)[0][0]
            got = tree.search(q, knn=1, checks=256).matches
            hits += int(got and got[0][0] == truth)
        return hits / len(queries)

    assert recall(incremental) >= recall(batch) - 0.02


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    pts = rng.random((700, 16)).astype(np.float32)
    params = IndexParams(branching=8, max_leaf_size=32, seed=13)
    tree = KMeansTree.build(pts, params)
    path = tmp_path / "index.atix"
    tree.save(path)
    loaded = KMeansTree.load(path)
    assert loaded.params == params
    assert len(loaded) == 700
    assert np.array_equal(loaded.all_points(), pts)
    # deterministic rebuild: identical partition and search behavior
    for la, lb in zip(tree.leaf_point_ids(), loaded.leaf_point_ids()):
        assert np.array_equal(la, lb)
    q = rng.random(16).astype(np.float32)
    assert tree.search(q, knn=3).matches == loaded.search(q, knn=3).matches


def test_snapshot_rejects_corrupt_file(tmp_path):
    path = tmp_path / "bad.atix"
    path.write_bytes(b"ATIXjunk")
    with pytest.raises(IndexFormatError):
        KMeansTree.load(path)


def test_params_validation():
    with pytest.raises(ValueError):
        IndexParams(branching=1)
    with pytest.raises(ValueError):
        IndexParams(checks=0)
