"""Least-squares gradient boosting of pixel-comparison regression trees."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from . import _kernels
from .imaging import GrayImage, InvalidParameterError, Region
from .tree import DEFAULT_CANDIDATES, SampleSet, _as_rng, _SplitSearch, grow_arrays, traverse

DEFAULT_SHRINKAGE = 0.5


def as_f32(x: float) -> float:
    """Round to the nearest float32, returned as a Python float."""
    return float(np.float32(x))


class BoostedEnsemble:
    """``base + shrinkage * sum(tree outputs)``.

    ``base`` and ``shrinkage`` are held at float32 precision so an encoded
    model predicts exactly what the in-memory one does.
    """

    __slots__ = ("base", "trees", "shrinkage", "depth")

    def __init__(self, base, trees, shrinkage: float = DEFAULT_SHRINKAGE, depth: Optional[int] = None):
        base = np.asarray(base, dtype=np.float32).reshape(2)
        shrinkage = as_f32(shrinkage)
        if not 0 < shrinkage <= 1:
            raise InvalidParameterError(f"shrinkage must lie in (0, 1], got {shrinkage}")
        trees = list(trees)
        if depth is None:
            depth = trees[0].depth if trees else 1
        if any(t.depth != depth for t in trees):
            raise InvalidParameterError("all trees of an ensemble must share one depth")
        base.setflags(write=False)
        self.base = base
        self.trees = trees
        self.shrinkage = shrinkage
        self.depth = int(depth)

    def __eq__(self, other):
        if not isinstance(other, BoostedEnsemble):
            return NotImplemented
        return (self.base.tobytes() == other.base.tobytes() and self.shrinkage == other.shrinkage
                and self.depth == other.depth and self.trees == other.trees)

    def __repr__(self):
        return f"BoostedEnsemble(n_trees={len(self.trees)}, depth={self.depth}, shrinkage={self.shrinkage})"


def predict(ens: BoostedEnsemble, img: GrayImage, region: Region, n_trees: Optional[int] = None):
    """Normalized-frame estimate; ``n_trees`` limits the sum to a prefix of the trees."""
    sx = sy = 0.0
    for tree in ens.trees[:n_trees]:
        lx, ly = traverse(tree, img, region)
        sx += lx
        sy += ly
    return float(ens.base[0]) + ens.shrinkage * sx, float(ens.base[1]) + ens.shrinkage * sy


def fit(samples: SampleSet, targets: np.ndarray, n_trees: int, depth: int, shrinkage: float,
        n_candidates: int, rng: np.random.Generator, threads: int = 1,
        on_round: Optional[Callable[[int, float], None]] = None):
    """Boost on explicit ``targets``; returns ``(ensemble, predictions, mse_per_round)``.

    ``predictions`` are the in-sample ensemble outputs, bit-identical to
    :func:`predict` on each sample.  ``mse_per_round[0]`` is the error of the
    base alone.
    """
    if len(samples) == 0:
        raise InvalidParameterError("cannot train on an empty sample set")
    if n_trees < 0:
        raise InvalidParameterError(f"n_trees must be >= 0, got {n_trees}")
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    idx = np.arange(len(samples), dtype=np.int64)
    base = np.array(_kernels.seq_mean(targets, idx), dtype=np.float32)
    shrinkage = as_f32(shrinkage)
    if not 0 < shrinkage <= 1:
        raise InvalidParameterError(f"shrinkage must lie in (0, 1], got {shrinkage}")

    base64 = base.astype(np.float64)
    acc = np.zeros_like(targets)
    pred = base64 + shrinkage * acc
    residual = targets - pred
    history = [float(np.mean(np.sum(residual * residual, axis=1)))]
    if on_round:
        on_round(0, history[0])
    trees = []
    search = _SplitSearch(samples, residual, threads)
    try:
        for k in range(n_trees):
            search.targets = residual
            tree, leaf_of = grow_arrays(search, depth, n_candidates, rng)
            trees.append(tree)
            acc += tree.leaves.astype(np.float64)[leaf_of]
            pred = base64 + shrinkage * acc
            residual = np.ascontiguousarray(targets - pred)
            history.append(float(np.mean(np.sum(residual * residual, axis=1))))
            if on_round:
                on_round(k + 1, history[-1])
    finally:
        search.close()
    return BoostedEnsemble(base, trees, shrinkage, depth), pred, history


def train_ensemble(samples, n_trees: int, depth: int, shrinkage: float = DEFAULT_SHRINKAGE,
                   n_candidates: int = DEFAULT_CANDIDATES, rng=None, threads: int = 1,
                   on_round=None) -> BoostedEnsemble:
    """Grow ``n_trees`` trees sequentially, each on the residuals left so far."""
    ss = SampleSet.from_samples(samples)
    ens, _, _ = fit(ss, ss.targets, n_trees, depth, shrinkage, n_candidates, _as_rng(rng),
                    threads, on_round)
    return ens
