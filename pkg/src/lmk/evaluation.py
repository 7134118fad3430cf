"""Normalized landmark error, accuracy curves and latency measurement."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cascade import CascadeModel, PerturbationPolicy, estimate
from .imaging import GrayImage, InvalidParameterError, Region


@dataclass(frozen=True)
class EvalRecord:
    estimates: Mapping[str, tuple[float, float]]
    ground_truth: Mapping[str, tuple[float, float]]
    inter_ocular: float

    def __post_init__(self):
        if not self.inter_ocular > 0:
            raise InvalidParameterError(f"inter_ocular must be > 0, got {self.inter_ocular}")
        missing = set(self.estimates) - set(self.ground_truth)
        if missing:
            raise InvalidParameterError(f"no ground truth for: {', '.join(sorted(missing))}")


def landmark_errors(rec: EvalRecord) -> dict[str, float]:
    """Per-landmark distance to ground truth divided by the inter-ocular distance."""
    out = {}
    for label, (x, y) in rec.estimates.items():
        gx, gy = rec.ground_truth[label]
        out[label] = math.hypot(x - gx, y - gy) / rec.inter_ocular
    return out


def normalized_error(rec: EvalRecord) -> float:
    """Mean over estimated landmarks of distance / inter-ocular distance."""
    if not rec.estimates:
        raise InvalidParameterError("normalized_error needs at least one estimated landmark")
    errs = landmark_errors(rec)
    return sum(errs.values()) / len(errs)


@dataclass(frozen=True)
class AccuracyCurve:
    thresholds: tuple[float, ...]
    fractions: tuple[float, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fraction"])
        for t, f in zip(self.thresholds, self.fractions):
            w.writerow([repr(float(t)), repr(float(f))])
        return buf.getvalue()

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def accuracy_curve(errors: Sequence[float], thresholds: Sequence[float]) -> AccuracyCurve:
    """Fraction of errors strictly below each threshold."""
    errors = np.asarray(errors, dtype=np.float64).ravel()
    if errors.size == 0:
        raise InvalidParameterError("accuracy_curve needs at least one error value")
    thresholds = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise InvalidParameterError("thresholds must be ascending")
    fractions = tuple(int(np.count_nonzero(errors < t)) / errors.size for t in thresholds)
    return AccuracyCurve(tuple(thresholds), fractions)


def default_thresholds(max_error: float = 0.25, step: float = 0.005) -> list[float]:
    n = int(round(max_error / step))
    return [round(i * step, 10) for i in range(n + 1)]


def _sig3(x: float) -> float:
    return float(f"{x:.3g}")


def benchmark(model: CascadeModel, img: GrayImage, region: Region,
              policy: PerturbationPolicy | None = None, repetitions: int = 100) -> dict:
    """Wall-clock statistics of :func:`estimate` in milliseconds.

    ``min(10, repetitions)`` untimed warm-up calls run first.  Results carry
    three significant digits.
    """
    if repetitions < 1:
        raise InvalidParameterError("repetitions must be >= 1")
    policy = policy or PerturbationPolicy()
    for _ in range(min(10, repetitions)):
        estimate(model, img, region, policy)
    times = np.empty(repetitions)
    clock = time.perf_counter
    for i in range(repetitions):
        t0 = clock()
        estimate(model, img, region, policy)
        times[i] = (clock() - t0) * 1e3
    return {
        "mean_ms": _sig3(float(times.mean())),
        "p50_ms": _sig3(float(np.percentile(times, 50))),
        "p95_ms": _sig3(float(np.percentile(times, 95))),
        "repetitions": repetitions,
    }
