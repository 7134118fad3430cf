"""Depth-limited regression trees over pixel-comparison tests.

Trees are complete and stored in heap order: internal node ``i`` has children
``2i + 1`` (test bit 0) and ``2i + 2`` (test bit 1).  Test locations are kept
as signed 8-bit fixed point (``q / 127``) and leaf outputs as float32 pairs,
exactly as they are written to disk.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .imaging import GrayImage, InvalidParameterError, NormLocation, Region, binary_test

FIXED_POINT_SCALE = 127
DEFAULT_CANDIDATES = 128


def quantize(values) -> np.ndarray:
    """Normalized coordinates to int8 fixed point, rounding half away from zero."""
    x = np.asarray(values, dtype=np.float64) * FIXED_POINT_SCALE
    t = np.trunc(x)
    t = t + np.where(np.abs(x - t) >= 0.5, np.sign(x), 0.0)
    return np.clip(t, -FIXED_POINT_SCALE, FIXED_POINT_SCALE).astype(np.int8)


def dequantize(q) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / FIXED_POINT_SCALE


@dataclass(frozen=True)
class BinaryTestParams:
    """Fixed-point pair of locations ``(l1.u, l1.v, l2.u, l2.v)``."""

    q: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.q) != 4 or any(not -127 <= int(c) <= 127 for c in self.q):
            raise InvalidParameterError(f"fixed-point test coordinates must be in [-127, 127]: {self.q}")
        object.__setattr__(self, "q", tuple(int(c) for c in self.q))

    @classmethod
    def from_normalized(cls, l1, l2) -> "BinaryTestParams":
        return cls(tuple(int(c) for c in quantize([l1[0], l1[1], l2[0], l2[1]])))

    @property
    def l1(self) -> NormLocation:
        return NormLocation(self.q[0] / FIXED_POINT_SCALE, self.q[1] / FIXED_POINT_SCALE)

    @property
    def l2(self) -> NormLocation:
        return NormLocation(self.q[2] / FIXED_POINT_SCALE, self.q[3] / FIXED_POINT_SCALE)

    def evaluate(self, img: GrayImage, region: Region) -> int:
        return binary_test(img, region, self.l1, self.l2)


class RegressionTree:
    """Complete binary tree of depth ``depth`` with 2-vector leaves."""

    __slots__ = ("depth", "tests", "leaves")

    def __init__(self, depth: int, tests, leaves):
        if depth < 1:
            raise InvalidParameterError(f"tree depth must be >= 1, got {depth}")
        tests = np.ascontiguousarray(tests, dtype=np.int8)
        leaves = np.ascontiguousarray(leaves, dtype=np.float32)
        if tests.shape != ((1 << depth) - 1, 4):
            raise InvalidParameterError(f"expected {(1 << depth) - 1} tests, got array of shape {tests.shape}")
        if leaves.shape != (1 << depth, 2):
            raise InvalidParameterError(f"expected {1 << depth} leaves, got array of shape {leaves.shape}")
        if np.any(tests == -128):
            raise InvalidParameterError("fixed-point test coordinates must be in [-127, 127]")
        if not np.all(np.isfinite(leaves)):
            raise InvalidParameterError("leaf outputs must be finite")
        tests.setflags(write=False)
        leaves.setflags(write=False)
        self.depth = depth
        self.tests = tests
        self.leaves = leaves

    @classmethod
    def constant(cls, depth: int, value) -> "RegressionTree":
        n = 1 << depth
        return cls(depth, np.zeros((n - 1, 4), np.int8), np.tile(np.asarray(value, np.float32), (n, 1)))

    def test(self, node: int) -> BinaryTestParams:
        return BinaryTestParams(tuple(self.tests[node]))

    def __eq__(self, other):
        if not isinstance(other, RegressionTree):
            return NotImplemented
        return (self.depth == other.depth and np.array_equal(self.tests, other.tests)
                and self.leaves.tobytes() == other.leaves.tobytes())

    def __repr__(self):
        return f"RegressionTree(depth={self.depth})"


def leaf_index(tree: RegressionTree, img: GrayImage, region: Region) -> int:
    node = 0
    for _ in range(tree.depth):
        node = 2 * node + 1 + tree.test(node).evaluate(img, region)
    return node - ((1 << tree.depth) - 1)


def traverse(tree: RegressionTree, img: GrayImage, region: Region) -> tuple[float, float]:
    """Route through ``depth`` binary tests and return the reached leaf's output."""
    leaf = tree.leaves[leaf_index(tree, img, region)]
    return float(leaf[0]), float(leaf[1])


@dataclass(frozen=True)
class TrainSample:
    image: GrayImage
    region: Region
    target: tuple[float, float]


class SampleSet(Sequence):
    """Columnar training set: shared images plus per-sample region/target arrays.

    ``points`` holds the landmark in pixel coordinates; later cascade stages
    re-express it in their own frames.
    """

    def __init__(self, images, image_index, regions, targets, points=None):
        self.images = list(images)
        self.image_index = np.ascontiguousarray(image_index, dtype=np.int64)
        self.regions = np.ascontiguousarray(regions, dtype=np.float64).reshape(-1, 3)
        self.targets = np.ascontiguousarray(targets, dtype=np.float64).reshape(-1, 2)
        n = len(self.image_index)
        if self.regions.shape[0] != n or self.targets.shape[0] != n:
            raise InvalidParameterError("sample arrays disagree in length")
        if n and (self.image_index.min() < 0 or self.image_index.max() >= len(self.images)):
            raise InvalidParameterError("image index out of range")
        if np.any(~(self.regions[:, 2] > 0)):
            raise InvalidParameterError("region sizes must be > 0")
        if not np.all(np.isfinite(self.targets)):
            raise InvalidParameterError("targets must be finite")
        if points is None:
            half = self.regions[:, 2] / 2
            points = np.stack([self.regions[:, 0] + self.targets[:, 0] * half,
                               self.regions[:, 1] + self.targets[:, 1] * half], axis=1)
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
        self._store = None

    @classmethod
    def from_samples(cls, samples: Sequence[TrainSample]) -> "SampleSet":
        if isinstance(samples, SampleSet):
            return samples
        images, index, seen = [], [], {}
        for s in samples:
            key = id(s.image)
            if key not in seen:
                seen[key] = len(images)
                images.append(s.image)
            index.append(seen[key])
        regions = [(s.region.center_x, s.region.center_y, s.region.size) for s in samples]
        targets = [tuple(s.target) for s in samples]
        return cls(images, index, np.array(regions, dtype=np.float64).reshape(-1, 3),
                   np.array(targets, dtype=np.float64).reshape(-1, 2))

    def with_frames(self, regions, targets) -> "SampleSet":
        out = SampleSet.__new__(SampleSet)
        out.images = self.images
        out.image_index = self.image_index
        out.regions = np.ascontiguousarray(regions, dtype=np.float64)
        out.targets = np.ascontiguousarray(targets, dtype=np.float64)
        out.points = self.points
        out._store = self.image_store()
        return out

    def image_store(self):
        """Flat pixel buffer with per-image offsets, widths and heights."""
        if self._store is None:
            sizes = [im.pixels.size for im in self.images]
            offs = np.zeros(len(self.images), np.int64)
            if sizes:
                offs[1:] = np.cumsum(sizes)[:-1]
            flat = (np.concatenate([im.pixels.ravel() for im in self.images])
                    if self.images else np.zeros(0, np.uint8))
            ws = np.array([im.width for im in self.images], np.int64)
            hs = np.array([im.height for im in self.images], np.int64)
            self._store = (flat, offs, ws, hs)
        return self._store

    def __len__(self):
        return len(self.image_index)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        r = self.regions[i]
        return TrainSample(self.images[self.image_index[i]], Region(*map(float, r)),
                           (float(self.targets[i, 0]), float(self.targets[i, 1])))


def cluster_cost(c0, c1) -> float:
    """Sum of squared distances to the cluster mean, over both clusters.

    Coordinates are taken relative to each cluster's first member, which makes
    the cost of a constant cluster exactly zero.
    """
    total = 0.0
    for cluster in (c0, c1):
        if len(cluster) == 0:
            continue
        rx, ry = cluster[0]
        sx = sy = 0.0
        for x, y in cluster:
            sx += x - rx
            sy += y - ry
        mx, my = sx / len(cluster), sy / len(cluster)
        q = 0.0
        for x, y in cluster:
            dx, dy = (x - rx) - mx, (y - ry) - my
            q += dx * dx + dy * dy
        total += q
    return total


class _SplitSearch:
    """Candidate scoring over one sample set, optionally spread across threads."""

    def __init__(self, samples: SampleSet, targets: np.ndarray, threads: int = 1):
        self.samples = samples
        self.targets = np.ascontiguousarray(targets, dtype=np.float64)
        self.store = samples.image_store()
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def costs(self, idx: np.ndarray, cands: np.ndarray) -> np.ndarray:
        flat, offs, ws, hs = self.store
        s = self.samples
        k = cands.shape[0]
        out = np.empty(k, np.float64)
        args = (flat, offs, ws, hs, s.image_index, s.regions, self.targets, idx, cands)
        if self._pool is None or k < 2:
            _kernels.node_costs(*args, 0, k, out)
        else:
            bounds = np.linspace(0, k, min(self.threads, k) + 1).astype(int)
            futures = [self._pool.submit(_kernels.node_costs, *args, int(lo), int(hi), out)
                       for lo, hi in zip(bounds[:-1], bounds[1:])]
            for f in futures:
                f.result()
        return out

    def bits(self, idx: np.ndarray, cand: np.ndarray) -> np.ndarray:
        flat, offs, ws, hs = self.store
        s = self.samples
        return _kernels.node_bits(flat, offs, ws, hs, s.image_index, s.regions, idx,
                                  cand[0], cand[1], cand[2], cand[3])

    def select(self, idx: np.ndarray, cands: np.ndarray):
        costs = self.costs(idx, cands)
        best = int(np.argmin(costs))  # first minimum: lowest index wins ties
        return best, float(costs[best]), self.bits(idx, cands[best])


def select_test(samples, candidates: Sequence[BinaryTestParams], threads: int = 1):
    """Pick the candidate whose split minimizes the two-cluster cost.

    Returns ``(best, left, right)`` where ``left`` holds samples whose test
    bit is 0.
    """
    if len(candidates) == 0:
        raise InvalidParameterError("select_test needs at least one candidate")
    ss = SampleSet.from_samples(samples)
    cands = dequantize([c.q for c in candidates]).reshape(-1, 4)
    idx = np.arange(len(ss), dtype=np.int64)
    with _SplitSearch(ss, ss.targets, threads) as search:
        best, _, bits = search.select(idx, cands)
    left = [samples[i] for i in idx[bits == 0]]
    right = [samples[i] for i in idx[bits == 1]]
    return candidates[best], left, right


def draw_candidates(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` fresh tests: four uniforms on [-1, 1] each, quantized to int8."""
    return quantize(rng.uniform(-1.0, 1.0, size=(n, 4)))


def _mean(targets: np.ndarray, idx: np.ndarray, fallback):
    if len(idx) == 0:
        return fallback
    return _kernels.seq_mean(targets, idx)


def grow_arrays(search: _SplitSearch, depth: int, n_candidates: int, rng: np.random.Generator,
                sample_idx: np.ndarray | None = None):
    """Grow one tree on ``search``'s targets; also return each sample's leaf index."""
    targets = search.targets
    n = len(search.samples)
    if n == 0:
        raise InvalidParameterError("cannot grow a tree on an empty sample set")
    if depth < 1:
        raise InvalidParameterError(f"tree depth must be >= 1, got {depth}")
    if n_candidates < 1:
        raise InvalidParameterError(f"n_candidates must be >= 1, got {n_candidates}")
    n_internal = (1 << depth) - 1
    tests = np.zeros((n_internal, 4), np.int8)
    members = [np.arange(n, dtype=np.int64) if sample_idx is None else sample_idx]
    means = [_mean(targets, members[0], (0.0, 0.0))]
    for node in range(n_internal):
        idx = members[node]
        q = draw_candidates(rng, n_candidates)
        best, _, bits = search.select(idx, dequantize(q))
        tests[node] = q[best]
        for side in (0, 1):
            child = idx[bits == side]
            members.append(child)
            means.append(_mean(targets, child, means[node]))
    leaves = np.array(means[n_internal:], dtype=np.float32)
    leaf_of = np.empty(n, np.int64)
    for leaf, idx in enumerate(members[n_internal:]):
        leaf_of[idx] = leaf
    return RegressionTree(depth, tests, leaves), leaf_of


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def grow_tree(samples, depth: int, n_candidates: int = DEFAULT_CANDIDATES, rng=None,
              threads: int = 1) -> RegressionTree:
    """Grow a complete tree by greedy split selection over random candidates.

    Nodes are processed in heap order and each draws ``n_candidates`` fresh
    tests from ``rng``.  A node reached by no samples keeps its parent's mean.
    """
    if len(samples) == 0:
        raise InvalidParameterError("cannot grow a tree on an empty sample set")
    ss = SampleSet.from_samples(samples)
    with _SplitSearch(ss, ss.targets, threads) as search:
        tree, _ = grow_arrays(search, depth, n_candidates, _as_rng(rng))
    return tree
