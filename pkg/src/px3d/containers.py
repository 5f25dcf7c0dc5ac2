"""Binary containers for scene inputs (PX3D) and compiled token output (PXTK).

All multi-byte values are little-endian. Reals are IEEE-754 binary32 on
disk and are kept as float32 in memory so round-trips are bit-identical;
downstream modules promote to float64 before doing arithmetic. Tensors are
row-major with channels/xyz innermost.

PX3D layout:
    magic       4 bytes  "PX3D"
    version     u32      (=1)
    flags       u32      bit0: 0=PIXEL, 1=PATCH (other bits reserved)
    frame_count u32
    H, W        u32 x2   pixel dimensions
    patch_h     u32
    patch_w     u32
    C           u32      channels
    per frame:
        frame_index u32
        features    patch_h*patch_w*C   f32
        points      (H*W*3 or patch_h*patch_w*3) f32
        labels      (H*W or patch_h*patch_w)     i32

PXTK layout:
    magic    4 bytes "PXTK"
    version  u32 (=1)
    K, C, G  u32 x3
    meta_len u32, then meta_len bytes of UTF-8 JSON (one object)
    group table: G x (label i32, count u32, centroid 3*f32)
    tokens       K*C f32
    coords       K*3 f32
    group_labels K   i32
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    InvariantViolation,
    IoFailure,
    TruncatedPayload,
    UnsupportedVersion,
)

MAGIC_SCENE = b"PX3D"
MAGIC_TOKENS = b"PXTK"
CONTAINER_VERSION = 1

SCENE_HEADER_SIZE = 4 + 8 * 4  # magic + eight u32 fields


class Granularity(IntEnum):
    PIXEL = 0
    PATCH = 1


@dataclass(eq=False)
class FrameRecord:
    """One frame's aligned tensors: features at patch resolution, points
    and labels at either pixel or patch resolution."""

    frame_index: int
    features: np.ndarray  # (patch_h, patch_w, C) float32
    points: np.ndarray    # (H, W, 3) or (patch_h, patch_w, 3) float32
    labels: np.ndarray    # (H, W) or (patch_h, patch_w) int32


@dataclass(eq=False)
class SceneBundle:
    frames: list[FrameRecord]
    granularity: Granularity
    height: int
    width: int
    patch_h: int
    patch_w: int
    channels: int

    def geometry_shape(self) -> tuple[int, int]:
        """Resolution at which points and labels are stored."""
        if self.granularity is Granularity.PATCH:
            return (self.patch_h, self.patch_w)
        return (self.height, self.width)

    def validate(self) -> None:
        if self.channels < 1:
            raise DimensionMismatch(f"channels must be >= 1, got {self.channels}")
        for name, v in (("height", self.height), ("width", self.width),
                        ("patch_h", self.patch_h), ("patch_w", self.patch_w)):
            if v < 1:
                raise DimensionMismatch(f"{name} must be >= 1, got {v}")
        gh, gw = self.geometry_shape()
        prev = -1
        for f in self.frames:
            if f.frame_index <= prev:
                raise InvariantViolation(
                    f"frame indices must be strictly increasing, "
                    f"got {f.frame_index} after {prev}")
            prev = f.frame_index
            if f.features.shape != (self.patch_h, self.patch_w, self.channels):
                raise DimensionMismatch(
                    f"frame {f.frame_index}: features shape "
                    f"{f.features.shape} != {(self.patch_h, self.patch_w, self.channels)}")
            if f.points.shape != (gh, gw, 3):
                raise DimensionMismatch(
                    f"frame {f.frame_index}: points shape {f.points.shape} != {(gh, gw, 3)}")
            if f.labels.shape != (gh, gw):
                raise DimensionMismatch(
                    f"frame {f.frame_index}: labels shape {f.labels.shape} != {(gh, gw)}")
            if f.features.dtype != np.float32 or f.points.dtype != np.float32:
                raise InvariantViolation(
                    f"frame {f.frame_index}: features/points must be float32")
            if f.labels.dtype != np.int32:
                raise InvariantViolation(f"frame {f.frame_index}: labels must be int32")
            if f.labels.min(initial=0) < -1:
                raise InvariantViolation(
                    f"frame {f.frame_index}: labels below -1 are not allowed")
            if self.granularity is Granularity.PATCH and not np.isfinite(f.points).all():
                raise InvariantViolation(
                    f"frame {f.frame_index}: non-finite points only allowed "
                    f"at PIXEL granularity")

    def equals(self, other: "SceneBundle") -> bool:
        if (self.granularity, self.height, self.width, self.patch_h,
                self.patch_w, self.channels) != (
                other.granularity, other.height, other.width, other.patch_h,
                other.patch_w, other.channels):
            return False
        if len(self.frames) != len(other.frames):
            return False
        for a, b in zip(self.frames, other.frames):
            if a.frame_index != b.frame_index:
                return False
            # bytewise so NaN payloads still compare equal
            if a.features.tobytes() != b.features.tobytes():
                return False
            if a.points.tobytes() != b.points.tobytes():
                return False
            if a.labels.tobytes() != b.labels.tobytes():
                return False
        return True


@dataclass(eq=False)
class GroupEntry:
    label: int
    count: int
    centroid: np.ndarray  # (3,) float32


@dataclass(eq=False)
class ProxySequence:
    """BFS-ordered token matrix with its group table.

    tokens[i] belongs to group group_labels[i]; rows are grouped
    contiguously following group_table order.
    """

    tokens: np.ndarray        # (K, C) float32
    coords: np.ndarray        # (K, 3) float32
    group_labels: np.ndarray  # (K,)  int32
    group_table: list[GroupEntry]
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def channels(self) -> int:
        return int(self.tokens.shape[1])

    def validate(self) -> None:
        k = self.k
        if self.tokens.ndim != 2:
            raise DimensionMismatch("tokens must be 2-dimensional")
        if self.coords.shape != (k, 3):
            raise DimensionMismatch(f"coords shape {self.coords.shape} != {(k, 3)}")
        if self.group_labels.shape != (k,):
            raise DimensionMismatch(
                f"group_labels shape {self.group_labels.shape} != {(k,)}")
        if not isinstance(self.meta, dict):
            raise InvariantViolation("meta must be a JSON object")
        total = 0
        expected = []
        for e in self.group_table:
            if e.count < 1:
                raise InvariantViolation(f"group {e.label} has count {e.count} < 1")
            total += e.count
            expected.extend([e.label] * e.count)
        if total != k:
            raise InvariantViolation(
                f"group table counts sum to {total}, expected K={k}")
        if expected and not np.array_equal(np.asarray(expected, dtype=np.int32),
                                           self.group_labels):
            raise InvariantViolation(
                "group_labels are not segment-contiguous in group table order")

    def equals(self, other: "ProxySequence") -> bool:
        if self.tokens.tobytes() != other.tokens.tobytes():
            return False
        if self.coords.tobytes() != other.coords.tobytes():
            return False
        if self.group_labels.tobytes() != other.group_labels.tobytes():
            return False
        if self.meta != other.meta:
            return False
        if len(self.group_table) != len(other.group_table):
            return False
        for a, b in zip(self.group_table, other.group_table):
            if a.label != b.label or a.count != b.count:
                return False
            if a.centroid.tobytes() != b.centroid.tobytes():
                return False
        return True


class ByteReader:
    """Cursor over an immutable byte buffer with typed failure modes."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedPayload(self.pos, n, len(self.data) - self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes) -> None:
        off = self.pos
        found = self.take(4)
        if found != expected:
            raise BadMagic(found, expected, off)

    def version(self, supported: int = CONTAINER_VERSION) -> int:
        off = self.pos
        v = self.u32()
        if v != supported:
            raise UnsupportedVersion(v, supported, off)
        return v

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i32(self) -> int:
        return struct.unpack("<i", self.take(4))[0]

    def f32_array(self, count: int, shape: tuple[int, ...]) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4", count=count).reshape(shape).astype(
            np.float32)

    def i32_array(self, count: int, shape: tuple[int, ...]) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<i4", count=count).reshape(shape).astype(
            np.int32)


def _u32(x: int) -> bytes:
    return struct.pack("<I", x)


def _i32(x: int) -> bytes:
    return struct.pack("<i", x)


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _i32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<i4").tobytes()


def _write_file(path, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_file(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def scene_frame_nbytes(bundle: SceneBundle) -> int:
    """Per-frame payload size implied by the header fields."""
    gh, gw = bundle.geometry_shape()
    return 4 + 4 * (bundle.patch_h * bundle.patch_w * bundle.channels
                    + gh * gw * 3 + gh * gw)


def write_scene(bundle: SceneBundle, path) -> None:
    bundle.validate()
    out = bytearray()
    out += MAGIC_SCENE
    out += _u32(CONTAINER_VERSION)
    out += _u32(1 if bundle.granularity is Granularity.PATCH else 0)
    out += _u32(len(bundle.frames))
    out += _u32(bundle.height)
    out += _u32(bundle.width)
    out += _u32(bundle.patch_h)
    out += _u32(bundle.patch_w)
    out += _u32(bundle.channels)
    for f in bundle.frames:
        out += _u32(f.frame_index)
        out += _f32_bytes(f.features)
        out += _f32_bytes(f.points)
        out += _i32_bytes(f.labels)
    _write_file(path, bytes(out))


def read_scene(path) -> SceneBundle:
    r = ByteReader(_read_file(path))
    r.magic(MAGIC_SCENE)
    r.version()
    flags = r.u32()
    granularity = Granularity.PATCH if flags & 1 else Granularity.PIXEL
    frame_count = r.u32()
    height, width = r.u32(), r.u32()
    patch_h, patch_w = r.u32(), r.u32()
    channels = r.u32()
    bundle = SceneBundle([], granularity, height, width, patch_h, patch_w, channels)
    bundle.validate()  # header sanity before sizing the payload reads
    gh, gw = bundle.geometry_shape()
    for _ in range(frame_count):
        idx = r.u32()
        features = r.f32_array(patch_h * patch_w * channels,
                               (patch_h, patch_w, channels))
        points = r.f32_array(gh * gw * 3, (gh, gw, 3))
        labels = r.i32_array(gh * gw, (gh, gw))
        bundle.frames.append(FrameRecord(idx, features, points, labels))
    bundle.validate()
    return bundle


def _meta_bytes(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def tokens_nbytes(k: int, channels: int, groups: int, meta: dict) -> int:
    """Total PXTK file size for the given dimensions."""
    return (4 + 4 * 4 + 4 + len(_meta_bytes(meta))
            + groups * 20 + 4 * (k * channels + k * 3 + k))


def write_tokens(seq: ProxySequence, path) -> None:
    seq.validate()
    out = bytearray()
    out += MAGIC_TOKENS
    out += _u32(CONTAINER_VERSION)
    out += _u32(seq.k)
    out += _u32(seq.channels)
    out += _u32(len(seq.group_table))
    meta = _meta_bytes(seq.meta)
    out += _u32(len(meta))
    out += meta
    for e in seq.group_table:
        out += _i32(e.label)
        out += _u32(e.count)
        out += _f32_bytes(e.centroid)
    out += _f32_bytes(seq.tokens)
    out += _f32_bytes(seq.coords)
    out += _i32_bytes(seq.group_labels)
    _write_file(path, bytes(out))


def read_tokens(path) -> ProxySequence:
    r = ByteReader(_read_file(path))
    r.magic(MAGIC_TOKENS)
    r.version()
    k = r.u32()
    channels = r.u32()
    groups = r.u32()
    meta_len = r.u32()
    meta_raw = r.take(meta_len)
    try:
        meta = json.loads(meta_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvariantViolation(f"meta is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(meta, dict):
        raise InvariantViolation("meta must be a JSON object")
    table = []
    for _ in range(groups):
        label = r.i32()
        count = r.u32()
        centroid = r.f32_array(3, (3,))
        table.append(GroupEntry(label, count, centroid))
    tokens = r.f32_array(k * channels, (k, channels))
    coords = r.f32_array(k * 3, (k, 3))
    group_labels = r.i32_array(k, (k,))
    seq = ProxySequence(tokens, coords, group_labels, table, meta)
    seq.validate()
    return seq
