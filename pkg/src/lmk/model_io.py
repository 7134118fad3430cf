"""Binary model files (``LMK1``).

Layout, all little-endian, no padding::

    magic        4s   b"LMK1"
    version      u16  1
    label_len    u16
    label        label_len bytes of UTF-8
    scale_decay  f32
    n_stages     u16
    per stage:
        shrinkage  f32
        base       2 x f32
        n_trees    u16
        depth      u8
        per tree:
            (2**depth - 1) x 4 x i8   test locations, fixed point q/127
            2**depth x 2 x f32        leaf outputs

See docs/model_format.md for the full description.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .cascade import CascadeModel
from .ensemble import BoostedEnsemble
from .imaging import InvalidParameterError
from .tree import RegressionTree

MAGIC = b"LMK1"
VERSION = 1

_HEADER = struct.Struct("<4sHH")
_GLOBALS = struct.Struct("<fH")
_STAGE = struct.Struct("<f2fHB")

MAX_DEPTH = 24


class ModelFormatError(ValueError):
    """Base class for unreadable model files."""


class BadMagicError(ModelFormatError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class SizeMismatchError(ModelFormatError):
    pass


class EncodeError(ValueError):
    """Model cannot be represented in the file format."""


def tree_bytes(depth: int) -> int:
    return ((1 << depth) - 1) * 4 + (1 << depth) * 8


def encoded_size(label: str, stages) -> int:
    """File size for ``stages`` given as ``(n_trees, depth)`` pairs."""
    size = _HEADER.size + len(label.encode("utf-8")) + _GLOBALS.size
    for n_trees, depth in stages:
        size += _STAGE.size + n_trees * tree_bytes(depth)
    return size


def model_size(model: CascadeModel) -> int:
    return encoded_size(model.landmark_id, [(len(s.trees), s.depth) for s in model.stages])


def encode(model: CascadeModel) -> bytes:
    label = model.landmark_id.encode("utf-8")
    if len(label) > 0xFFFF:
        raise EncodeError(f"landmark label too long ({len(label)} bytes, max 65535)")
    if len(model.stages) > 0xFFFF:
        raise EncodeError(f"too many stages ({len(model.stages)}, max 65535)")
    parts = [_HEADER.pack(MAGIC, VERSION, len(label)), label,
             _GLOBALS.pack(model.scale_decay, len(model.stages))]
    for k, stage in enumerate(model.stages):
        if len(stage.trees) > 0xFFFF:
            raise EncodeError(f"stage {k}: too many trees ({len(stage.trees)}, max 65535)")
        if not 0 <= stage.depth <= MAX_DEPTH:
            raise EncodeError(f"stage {k}: depth {stage.depth} outside [0, {MAX_DEPTH}]")
        parts.append(_STAGE.pack(stage.shrinkage, float(stage.base[0]), float(stage.base[1]),
                                 len(stage.trees), stage.depth))
        for tree in stage.trees:
            parts.append(tree.tests.astype("<i1").tobytes())
            parts.append(tree.leaves.astype("<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.data):
            raise TruncatedModelError(
                f"truncated model file: need {n} bytes for {what} at offset {self.pos}, "
                f"only {len(self.data) - self.pos} left")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct, what: str):
        return st.unpack(self.take(st.size, what))


def decode(data: bytes) -> CascadeModel:
    r = _Reader(bytes(data))
    if len(data) < 4 or bytes(data[:4]) != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, got {bytes(data[:4])!r}")
    _, version, label_len = r.unpack(_HEADER, "header")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported model version {version} (supported: {VERSION})")
    try:
        label = bytes(r.take(label_len, "label")).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"landmark label is not valid UTF-8: {exc}") from None
    scale_decay, n_stages = r.unpack(_GLOBALS, "globals")
    stages = []
    for k in range(n_stages):
        shrinkage, bx, by, n_trees, depth = r.unpack(_STAGE, f"stage {k} header")
        if n_trees and not 1 <= depth <= MAX_DEPTH:
            raise ModelFormatError(f"stage {k}: invalid tree depth {depth}")
        n_int, n_leaf = (1 << depth) - 1, 1 << depth
        trees = []
        for t in range(n_trees):
            tests = np.frombuffer(r.take(n_int * 4, f"stage {k} tree {t} tests"), "<i1").reshape(n_int, 4)
            leaves = np.frombuffer(r.take(n_leaf * 8, f"stage {k} tree {t} leaves"), "<f4").reshape(n_leaf, 2)
            try:
                trees.append(RegressionTree(depth, tests.astype(np.int8), leaves.astype(np.float32)))
            except InvalidParameterError as exc:
                raise ModelFormatError(f"stage {k} tree {t}: {exc}") from None
        try:
            stages.append(BoostedEnsemble(np.array([bx, by], np.float32), trees, shrinkage, depth))
        except InvalidParameterError as exc:
            raise ModelFormatError(f"stage {k}: {exc}") from None
    if r.pos != len(data):
        raise SizeMismatchError(
            f"size mismatch: header declares {r.pos} bytes, file has {len(data)}")
    try:
        return CascadeModel(stages, scale_decay, label)
    except InvalidParameterError as exc:
        raise ModelFormatError(str(exc)) from None


def save(model: CascadeModel, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(model))


def load(path: str | os.PathLike) -> CascadeModel:
    with open(path, "rb") as fh:
        return decode(fh.read())
