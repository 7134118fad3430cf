"""Coarse-to-fine chain of boosted stages and the perturbation-median estimator.

Each stage predicts the landmark in the normalized frame of its region; the
next stage's region is centered on that prediction and shrunk by
``scale_decay``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .ensemble import DEFAULT_SHRINKAGE, as_f32, fit, predict
from .imaging import GrayImage, InvalidParameterError, Region, jitter_regions, shrink_recenter
from .tree import DEFAULT_CANDIDATES, SampleSet

log = logging.getLogger(__name__)

DEFAULT_SCALE_DECAY = 0.7


class CascadeModel:
    """Ordered stages, largest scale first.  ``scale_decay`` is held at float32 precision."""

    def __init__(self, stages, scale_decay: float = DEFAULT_SCALE_DECAY, landmark_id: str = ""):
        stages = list(stages)
        if not stages:
            raise InvalidParameterError("a cascade needs at least one stage")
        scale_decay = as_f32(scale_decay)
        if not 0 < scale_decay <= 1:
            raise InvalidParameterError(f"scale_decay must lie in (0, 1], got {scale_decay}")
        self.stages = stages
        self.scale_decay = scale_decay
        self.landmark_id = landmark_id

    def __eq__(self, other):
        if not isinstance(other, CascadeModel):
            return NotImplemented
        return (self.stages == other.stages and self.scale_decay == other.scale_decay
                and self.landmark_id == other.landmark_id)

    def __repr__(self):
        return (f"CascadeModel({self.landmark_id!r}, stages={len(self.stages)}, "
                f"trees={[len(s.trees) for s in self.stages]}, scale_decay={self.scale_decay})")

    @cached_property
    def packed(self):
        """Flat arrays consumed by the compiled estimator."""
        bases = np.array([s.base for s in self.stages], np.float64).reshape(-1, 2)
        shrinks = np.array([s.shrinkage for s in self.stages], np.float64)
        depths = np.array([s.depth for s in self.stages], np.int64)
        trees = [t for s in self.stages for t in s.trees]
        stage_tree_lo = np.zeros(len(self.stages) + 1, np.int64)
        stage_tree_lo[1:] = np.cumsum([len(s.trees) for s in self.stages])
        tree_test_lo = np.zeros(len(trees), np.int64)
        tree_leaf_lo = np.zeros(len(trees), np.int64)
        if trees:
            tree_test_lo[1:] = np.cumsum([t.tests.shape[0] for t in trees])[:-1]
            tree_leaf_lo[1:] = np.cumsum([t.leaves.shape[0] for t in trees])[:-1]
            tests = np.concatenate([t.tests for t in trees]).astype(np.float64) / 127
            leaves = np.concatenate([t.leaves for t in trees]).astype(np.float64)
        else:
            tests = np.zeros((0, 4), np.float64)
            leaves = np.zeros((0, 2), np.float64)
        return (bases, shrinks, depths, stage_tree_lo, tree_test_lo, tree_leaf_lo,
                np.ascontiguousarray(tests), np.ascontiguousarray(leaves))


@dataclass(frozen=True)
class PerturbationPolicy:
    n_perturbations: int = 7
    max_offset: float = 0.05
    scale_range: tuple[float, float] = (0.9, 1.1)
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_perturbations < 1:
            raise InvalidParameterError("n_perturbations must be >= 1")
        if self.max_offset < 0:
            raise InvalidParameterError("max_offset must be >= 0")
        low, high = self.scale_range
        if not 0 < low <= high:
            raise InvalidParameterError(f"scale_range must satisfy 0 < low <= high, got {self.scale_range}")

    @classmethod
    def none(cls) -> "PerturbationPolicy":
        """Single unperturbed evaluation."""
        return cls(1, 0.0, (1.0, 1.0))


def estimate_once(model: CascadeModel, img: GrayImage, region: Region) -> tuple[float, float]:
    """Run the stage chain once from ``region``; returns pixel coordinates.

    Pure-Python reference path.  :func:`estimate_regions` computes the same
    values with compiled code.
    """
    r = region
    px, py = r.center_x, r.center_y
    for k, stage in enumerate(model.stages):
        u, v = predict(stage, img, r)
        px, py = r.to_pixel(u, v)
        if k + 1 < len(model.stages):
            r = shrink_recenter(r, (px, py), model.scale_decay)
    return px, py


def estimate_regions(model: CascadeModel, img: GrayImage, regions: np.ndarray) -> np.ndarray:
    """Compiled :func:`estimate_once` for each row ``(cx, cy, size)`` of ``regions``."""
    regions = np.ascontiguousarray(regions, dtype=np.float64).reshape(-1, 3)
    out = np.empty((regions.shape[0], 2), np.float64)
    _kernels.cascade_estimates(img.pixels, regions, *model.packed, model.scale_decay, out)
    return out


def median(values) -> float:
    """Median with the even-count case resolved as the midpoint of the middle pair."""
    v = sorted(values)
    n = len(v)
    mid = n // 2
    if n % 2:
        return v[mid]
    return (v[mid - 1] + v[mid]) / 2


def estimate(model: CascadeModel, img: GrayImage, region: Region,
             policy: Optional[PerturbationPolicy] = None) -> tuple[float, float]:
    """Per-axis median of cascade estimates over randomly perturbed regions."""
    policy = policy or PerturbationPolicy()
    rng = np.random.default_rng(policy.rng_seed)
    regions = jitter_regions(region, policy.n_perturbations, policy.max_offset, policy.scale_range, rng)
    points = estimate_regions(model, img, regions)
    return median(points[:, 0].tolist()), median(points[:, 1].tolist())


@dataclass
class TrainConfig:
    n_stages: int = 6
    trees_per_stage: int = 20
    depth: int = 9
    shrinkage: float = DEFAULT_SHRINKAGE
    scale_decay: float = DEFAULT_SCALE_DECAY
    n_candidates: int = DEFAULT_CANDIDATES
    seed: int = 0
    threads: int = 1

    def validate(self):
        if self.n_stages < 1:
            raise InvalidParameterError("n_stages must be >= 1")
        if self.trees_per_stage < 0:
            raise InvalidParameterError("trees_per_stage must be >= 0")
        if self.depth < 1:
            raise InvalidParameterError("depth must be >= 1")
        if self.n_candidates < 1:
            raise InvalidParameterError("n_candidates must be >= 1")
        if not 0 < self.shrinkage <= 1:
            raise InvalidParameterError(f"shrinkage must lie in (0, 1], got {self.shrinkage}")
        if not 0 < self.scale_decay <= 1:
            raise InvalidParameterError(f"scale_decay must lie in (0, 1], got {self.scale_decay}")


def train_cascade(samples, config: Optional[TrainConfig] = None, landmark_id: str = "",
                  on_round: Optional[Callable[[int, int, float], None]] = None) -> CascadeModel:
    """Train stage by stage, re-framing every sample at its own partial-cascade estimate.

    ``on_round(stage, round, mse)`` receives the training error after each
    boosting round (round 0 is the stage's constant base).
    """
    config = config or TrainConfig()
    config.validate()
    ss = SampleSet.from_samples(samples)
    if len(ss) == 0:
        raise InvalidParameterError("cannot train a cascade on an empty sample set")
    rng = np.random.default_rng(config.seed)
    decay = as_f32(config.scale_decay)
    regions = ss.regions.copy()
    targets = ss.targets
    stages = []
    for k in range(config.n_stages):
        frame = ss.with_frames(regions, targets)
        cb = (lambda r, mse, k=k: on_round(k, r, mse)) if on_round else None
        ens, pred, history = fit(frame, targets, config.trees_per_stage, config.depth,
                                 config.shrinkage, config.n_candidates, rng, config.threads, cb)
        stages.append(ens)
        log.info("stage %d: mse %.6g -> %.6g", k, history[0], history[-1])
        if k + 1 == config.n_stages:
            break
        # next frame: centered on this stage's estimate, shrunk by the decay
        new = np.empty_like(regions)
        new[:, 0] = regions[:, 0] + pred[:, 0] * regions[:, 2] / 2
        new[:, 1] = regions[:, 1] + pred[:, 1] * regions[:, 2] / 2
        new[:, 2] = regions[:, 2] * decay
        regions = new
        nhalf = regions[:, 2] / 2
        targets = np.stack([(ss.points[:, 0] - regions[:, 0]) / nhalf,
                            (ss.points[:, 1] - regions[:, 1]) / nhalf], axis=1)
    return CascadeModel(stages, decay, landmark_id)
