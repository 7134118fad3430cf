"""Annotation manifests and training-set augmentation.

A manifest holds one JSON object per line::

    {"image": "faces/0001.pgm", "box": [cx, cy, size], "landmarks": {"nose": [x, y], ...}}

An optional ``"inter_ocular"`` field gives the per-record normalizing distance
used by evaluation.  Relative image paths resolve against the manifest's
directory.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np

from .imaging import GrayImage, InvalidParameterError, Region, jitter_regions, read_pgm
from .tree import SampleSet, TrainSample

KNOWN_FIELDS = {"image", "box", "landmarks", "inter_ocular"}
REQUIRED_FIELDS = ("image", "box", "landmarks")


class ManifestError(ValueError):
    """Unreadable or invalid manifest."""


@dataclass(frozen=True)
class ManifestRecord:
    image_path: Path
    face_box: Region
    landmarks: dict[str, tuple[float, float]]
    inter_ocular: Optional[float] = None


@dataclass
class AugmentationConfig:
    copies_per_image: int = 20
    center_jitter: float = 0.07
    scale_jitter: tuple[float, float] = (0.9, 1.1)
    mirror: bool = False
    seed: int = 0
    symmetry: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.copies_per_image < 1:
            raise InvalidParameterError("copies_per_image must be >= 1")
        if self.center_jitter < 0:
            raise InvalidParameterError("center_jitter must be >= 0")
        low, high = self.scale_jitter
        if not 0 < low <= high:
            raise InvalidParameterError(f"scale_jitter must satisfy 0 < low <= high, got {self.scale_jitter}")


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{what} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{what} must be finite")
    return value


def _point(value, what: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise ValueError(f"{what} must be a list [x, y]")
    return _number(value[0], what + "[0]"), _number(value[1], what + "[1]")


def parse_record(line: str, base_dir: Path) -> ManifestRecord:
    obj = json.loads(line, object_pairs_hook=_no_duplicates)
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    unknown = set(obj) - KNOWN_FIELDS
    if unknown:
        raise ValueError(f"unknown field(s): {', '.join(sorted(unknown))}")
    for name in REQUIRED_FIELDS:
        if name not in obj:
            raise ValueError(f"missing field {name!r}")
    if not isinstance(obj["image"], str) or not obj["image"]:
        raise ValueError("'image' must be a non-empty string")
    box = obj["box"]
    if not isinstance(box, list) or len(box) != 3:
        raise ValueError("'box' must be a list [cx, cy, size]")
    cx, cy, size = (_number(v, "box") for v in box)
    if size <= 0:
        raise ValueError(f"box size must be > 0, got {size}")
    if not isinstance(obj["landmarks"], dict):
        raise ValueError("'landmarks' must be an object {label: [x, y]}")
    landmarks = {str(k): _point(v, f"landmark {k!r}") for k, v in obj["landmarks"].items()}
    iod = None
    if "inter_ocular" in obj:
        iod = _number(obj["inter_ocular"], "inter_ocular")
        if iod <= 0:
            raise ValueError(f"inter_ocular must be > 0, got {iod}")
    path = Path(obj["image"])
    if not path.is_absolute():
        path = base_dir / path
    return ManifestRecord(path, Region(cx, cy, size), landmarks, iod)


def load_manifest(path: str | os.PathLike) -> list[ManifestRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    records = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            records.append(parse_record(line, path.parent))
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
    return records


def record_to_json(rec: ManifestRecord, base_dir: Optional[Path] = None) -> str:
    image = rec.image_path
    if base_dir is not None:
        try:
            image = image.relative_to(base_dir)
        except ValueError:
            pass
    obj = {"image": str(image), "box": [rec.face_box.center_x, rec.face_box.center_y, rec.face_box.size],
           "landmarks": {k: [x, y] for k, (x, y) in rec.landmarks.items()}}
    if rec.inter_ocular is not None:
        obj["inter_ocular"] = rec.inter_ocular
    return json.dumps(obj)


def mirror_sample(sample: TrainSample) -> TrainSample:
    """Horizontal mirror of a sample whose landmark is its own mirror partner."""
    w = sample.image.width
    r = sample.region
    return TrainSample(sample.image.mirrored(), Region((w - 1) - r.center_x, r.center_y, r.size),
                       (-sample.target[0], sample.target[1]))


def augment(records, landmark_label: str, cfg: Optional[AugmentationConfig] = None,
            symmetry: Optional[Mapping[str, str]] = None,
            load_image: Callable[[Path], GrayImage] = read_pgm) -> SampleSet:
    """Jittered (and optionally mirrored) training samples for one landmark.

    Per record, ``copies_per_image`` jittered boxes are emitted, followed by
    their mirror images when ``cfg.mirror`` is set.  A mirrored sample's
    target is the mirror of the *partner* landmark from ``symmetry`` (a label
    with no entry is its own partner).  Record ``i`` draws from a generator
    seeded with ``(seed, i)``.
    """
    cfg = cfg or AugmentationConfig()
    symmetry = dict(cfg.symmetry if symmetry is None else symmetry)
    partner = symmetry.get(landmark_label, landmark_label)
    images: list[GrayImage] = []
    cache: dict[tuple[Path, bool], int] = {}

    def image_index(path: Path, mirrored: bool) -> int:
        key = (path, mirrored)
        if key not in cache:
            if mirrored:
                img = images[image_index(path, False)].mirrored()
            else:
                img = load_image(path)
            cache[key] = len(images)
            images.append(img)
        return cache[key]

    index, regions, points = [], [], []
    for i, rec in enumerate(records):
        if landmark_label not in rec.landmarks:
            raise InvalidParameterError(f"record {i} ({rec.image_path}) has no landmark {landmark_label!r}")
        if cfg.mirror and partner not in rec.landmarks:
            raise InvalidParameterError(f"record {i} ({rec.image_path}) has no mirror partner {partner!r}")
        rng = np.random.default_rng([cfg.seed, i])
        boxes = jitter_regions(rec.face_box, cfg.copies_per_image, cfg.center_jitter, cfg.scale_jitter, rng)
        g = image_index(rec.image_path, False)
        index.extend([g] * len(boxes))
        regions.append(boxes)
        points.append(np.tile(rec.landmarks[landmark_label], (len(boxes), 1)))
        if cfg.mirror:
            w = images[g].width
            gm = image_index(rec.image_path, True)
            mboxes = boxes.copy()
            mboxes[:, 0] = (w - 1) - boxes[:, 0]
            px, py = rec.landmarks[partner]
            index.extend([gm] * len(boxes))
            regions.append(mboxes)
            points.append(np.tile(((w - 1) - px, py), (len(boxes), 1)))
    if not index:
        return SampleSet(images, np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros((0, 2)))
    regions = np.concatenate(regions)
    points = np.concatenate(points).astype(np.float64)
    half = regions[:, 2] / 2
    targets = np.stack([(points[:, 0] - regions[:, 0]) / half, (points[:, 1] - regions[:, 1]) / half], axis=1)
    return SampleSet(images, index, regions, targets, points)
