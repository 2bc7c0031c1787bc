"""Priority search k-means tree for approximate nearest-neighbor retrieval.

The tree recursively k-means-partitions the descriptor set until clusters fit
in a leaf. Queries run best-bin-first: descend to the closest-centroid leaf
while pushing sibling subtrees on a min-priority queue keyed by centroid
distance, then keep popping until the leaf-visit budget (`checks`) is spent.
Reported distances are always the true squared Euclidean distance; the budget
only affects which ids are found.

Online growth appends points to a side buffer that is scanned linearly at
query time; once the buffer outgrows max(256, tree size) the whole index is
rebuilt with a deterministically advanced seed.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

INDEX_MAGIC = b"ATIX"
INDEX_VERSION = 1

_INDEX_HEADER = struct.Struct("<4sIIIIIQQQI")

_U64_MASK = 0xFFFFFFFFFFFFFFFF


class IndexFormatError(ValueError):
    """Raised for malformed index snapshot files."""


@dataclass(frozen=True)
class IndexParams:
    branching: int = 32
    max_leaf_size: int = 64
    kmeans_iters: int = 11
    checks: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.branching < 2:
            raise ValueError("branching must be >= 2")
        if self.max_leaf_size < 1:
            raise ValueError("max_leaf_size must be >= 1")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be >= 1")
        if self.checks < 1:
            raise ValueError("checks must be >= 1")


@dataclass(frozen=True)
class SearchResult:
    """Nearest matches as (point_id, squared distance), ascending by distance."""

    matches: list[tuple[int, float]]
    exhaustive: bool


class _Leaf:
    __slots__ = ("point_ids",)

    def __init__(self, point_ids: np.ndarray):
        self.point_ids = point_ids


class _Internal:
    __slots__ = ("centroids", "children")

    def __init__(self, centroids: np.ndarray, children: list):
        self.centroids = centroids
        self.children = children


def _build_rng(seed: int, rebuild_count: int) -> np.random.Generator:
    key = np.array([seed & _U64_MASK, rebuild_count], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class KMeansTree:
    """Hierarchical k-means index over equal-length float vectors.

    Point ids are insertion positions (0-based). The tree is immutable
    between inserts; concurrent searches between insertions are safe.
    """

    def __init__(self, params: IndexParams = IndexParams()):
        self.params = params
        self._dim: int | None = None
        self._tree_points = np.empty((0, 0), dtype=np.float32)
        self._buffer: list[np.ndarray] = []
        self._root = None
        self._rebuild_count = 0

    @classmethod
    def build(cls, points, params: IndexParams = IndexParams()) -> "KMeansTree":
        """Batch-build an index over `points` (sequence of vectors, may be empty)."""
        tree = cls(params)
        mat = tree._coerce_points(points)
        if mat is not None:
            tree._tree_points = mat
            tree._root = tree._build_node(np.arange(mat.shape[0]), _build_rng(params.seed, 0))
        return tree

    def _coerce_points(self, points) -> np.ndarray | None:
        rows = [np.asarray(p, dtype=np.float32).reshape(-1) for p in points]
        if not rows:
            return None
        dim = rows[0].size
        for i, r in enumerate(rows):
            if r.size != dim:
                raise ValueError(f"descriptor {i} has length {r.size}, expected {dim}")
        self._dim = dim
        return np.vstack(rows)

    def __len__(self) -> int:
        if self._dim is None:
            return 0
        return self._tree_points.shape[0] + len(self._buffer)

    def _check_dim(self, vec: np.ndarray) -> np.ndarray:
        v = np.asarray(vec, dtype=np.float32).reshape(-1)
        if self._dim is not None and v.size != self._dim:
            raise ValueError(f"vector length {v.size} does not match index dim {self._dim}")
        return v

    def insert(self, point) -> None:
        """Append one point; rebuilds when the side buffer outgrows the tree."""
        v = self._check_dim(point)
        if self._dim is None:
            self._dim = v.size
        self._buffer.append(v)
        if len(self._buffer) > max(256, self._tree_points.shape[0]):
            self._rebuild()

    def _rebuild(self) -> None:
        all_points = np.vstack([self._tree_points.reshape(-1, self._dim), np.array(self._buffer)])
        self._rebuild_count += 1
        self._tree_points = all_points.astype(np.float32)
        self._buffer = []
        self._root = self._build_node(
            np.arange(all_points.shape[0]), _build_rng(self.params.seed, self._rebuild_count)
        )

    def _build_node(self, ids: np.ndarray, rng: np.random.Generator):
        p = self.params
        n = ids.size
        if n <= p.max_leaf_size:
            return _Leaf(ids)
        k = min(p.branching, n)
        x = self._tree_points[ids].astype(np.float64)
        centroids = x[np.sort(rng.choice(n, size=k, replace=False))].copy()
        assign = None
        x_sq = (x * x).sum(axis=1)
        for _ in range(p.kmeans_iters):
            d2 = x_sq[:, None] + (centroids * centroids).sum(axis=1)[None, :] - 2.0 * (x @ centroids.T)
            new_assign = np.argmin(d2, axis=1)
            if assign is not None and np.array_equal(new_assign, assign):
                break
            assign = new_assign
            for c in range(k):
                members = assign == c
                if members.any():
                    centroids[c] = x[members].mean(axis=0)
        groups = [(c, ids[assign == c]) for c in range(k) if (assign == c).any()]
        if len(groups) == 1:
            return _Leaf(ids)
        kept = np.array([c for c, _ in groups])
        children = [self._build_node(member_ids, rng) for _, member_ids in groups]
        return _Internal(centroids[kept], children)

    def search(self, query, knn: int, checks: int | None = None) -> SearchResult:
        """Best-bin-first k-nearest search under a leaf-visit budget.

        Scores at most `checks` tree leaf points (the side buffer is always
        scanned in full), then returns up to `knn` scored ids ascending by
        true squared Euclidean distance.
        """
        q = self._check_dim(query).astype(np.float64)
        if self._dim is None or (self._root is None and not self._buffer):
            return SearchResult(matches=[], exhaustive=True)
        if checks is None:
            checks = self.params.checks

        scored_ids: list[np.ndarray] = []
        scored_d2: list[np.ndarray] = []
        n_scored = 0

        heap: list[tuple[float, int, object]] = []
        push_count = 0

        def visit(node) -> None:
            nonlocal n_scored, push_count
            while isinstance(node, _Internal):
                d2 = ((node.centroids - q[None, :]) ** 2).sum(axis=1)
                best = int(np.argmin(d2))
                for i, child in enumerate(node.children):
                    if i != best:
                        heapq.heappush(heap, (float(d2[i]), push_count, child))
                        push_count += 1
                node = node.children[best]
            pts = self._tree_points[node.point_ids].astype(np.float64)
            scored_ids.append(node.point_ids)
            scored_d2.append(((pts - q[None, :]) ** 2).sum(axis=1))
            n_scored += node.point_ids.size

        if self._root is not None:
            visit(self._root)
            while heap and n_scored < checks:
                _, _, node = heapq.heappop(heap)
                visit(node)

        tree_n = self._tree_points.shape[0] if self._root is not None else 0
        if self._buffer:
            buf = np.array(self._buffer, dtype=np.float32).astype(np.float64)
            scored_ids.append(np.arange(tree_n, tree_n + len(self._buffer)))
            scored_d2.append(((buf - q[None, :]) ** 2).sum(axis=1))

        ids = np.concatenate(scored_ids) if scored_ids else np.empty(0, dtype=int)
        d2s = np.concatenate(scored_d2) if scored_d2 else np.empty(0)
        order = np.lexsort((ids, d2s))[:knn]
        matches = [(int(ids[i]), float(d2s[i])) for i in order]
        return SearchResult(matches=matches, exhaustive=(ids.size == len(self)))

    def leaf_point_ids(self) -> list[np.ndarray]:
        """Point-id arrays of every leaf, pre-order. Buffered points excluded."""
        leaves: list[np.ndarray] = []
        stack = [self._root] if self._root is not None else []
        while stack:
            node = stack.pop()
            if isinstance(node, _Leaf):
                leaves.append(node.point_ids)
            else:
                stack.extend(reversed(node.children))
        return leaves

    def all_points(self) -> np.ndarray:
        """All indexed points in id order, shape (n, dim)."""
        if self._dim is None:
            return np.empty((0, 0), dtype=np.float32)
        parts = [self._tree_points.reshape(-1, self._dim)]
        if self._buffer:
            parts.append(np.array(self._buffer, dtype=np.float32))
        return np.vstack(parts)

    def save(self, destination: str | Path) -> int:
        """Write an ATIX snapshot: params plus the flat point payload.

        Tree structure is not serialized; `load` rebuilds it deterministically.
        """
        pts = self.all_points()
        n, dim = pts.shape
        header = _INDEX_HEADER.pack(
            INDEX_MAGIC,
            INDEX_VERSION,
            self.params.branching,
            self.params.max_leaf_size,
            self.params.kmeans_iters,
            self.params.checks,
            self.params.seed & _U64_MASK,
            self._rebuild_count,
            n,
            dim,
        )
        payload = pts.astype("<f4", copy=False).tobytes()
        data = header + payload
        Path(destination).write_bytes(data)
        return len(data)

    @classmethod
    def load(cls, source: str | Path) -> "KMeansTree":
        """Rebuild an index from an ATIX snapshot."""
        raw = Path(source).read_bytes()
        if len(raw) < _INDEX_HEADER.size:
            raise IndexFormatError(f"{source}: file shorter than the header")
        (magic, version, branching, max_leaf, iters, checks, seed, rebuilds, n, dim) = \
            _INDEX_HEADER.unpack_from(raw)
        if magic != INDEX_MAGIC:
            raise IndexFormatError(f"{source}: bad magic {magic!r}")
        if version != INDEX_VERSION:
            raise IndexFormatError(f"{source}: unsupported version {version}")
        expected = 4 * n * dim
        if len(raw) - _INDEX_HEADER.size != expected:
            raise IndexFormatError(f"{source}: payload size mismatch")
        params = IndexParams(
            branching=branching, max_leaf_size=max_leaf, kmeans_iters=iters,
            checks=checks, seed=seed,
        )
        tree = cls(params)
        tree._rebuild_count = rebuilds
        if n:
            pts = np.frombuffer(raw, dtype="<f4", offset=_INDEX_HEADER.size).reshape(n, dim)
            tree._dim = dim
            tree._tree_points = pts.astype(np.float32)
            tree._root = tree._build_node(np.arange(n), _build_rng(params.seed, rebuilds))
        return tree
