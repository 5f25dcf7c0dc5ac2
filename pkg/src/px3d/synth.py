"""Deterministic synthetic scenes with exact ground truth.

Axis-aligned boxes are placed without overlap inside a closed room; cameras
orbit the room center on a circle at fixed height. Per frame, one ray per
grid cell is intersected analytically with the boxes (nearest hit wins) and
with the room shell (background), so every stored 3D point lies exactly on
known geometry and every label has a known owner. Features are a per-object
category prototype plus Gaussian noise.

Everything is derived from a single seeded generator in a fixed draw order,
so equal specs produce byte-identical bundles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .containers import FrameRecord, Granularity, SceneBundle
from .errors import PlacementFailure
from .patchgrid import dominant_label
from .refembed import EmbeddingRegistry

_PLACE_MARGIN = 0.05   # box to wall
_BOX_GAP = 0.02        # box to box
_CAMERA_CLEARANCE = 0.15


@dataclass
class SceneSpec:
    seed: int
    frames: int = 32
    patch_h: int = 16
    patch_w: int = 21
    channels: int = 64
    objects: int = 8
    image_size: int = 512                  # recorded H=W for PATCH bundles
    pixel_q: int | None = None             # set: PIXEL granularity, H=q*patch_h
    room: tuple[float, float, float] = (6.0, 6.0, 3.0)
    noise_std: float = 0.01
    fov: float = 1.2                       # radians, along the longer grid axis
    max_attempts: int = 200

    def validate(self) -> None:
        if self.objects < 1:
            raise ValueError("objects must be >= 1")
        if min(self.room) <= 0:
            raise ValueError("room extents must be positive")
        if self.frames < 0:
            raise ValueError("frames must be >= 0")


@dataclass
class ObjectTruth:
    label: int
    category: int
    center: np.ndarray   # (3,)
    size: np.ndarray     # (3,)
    patch_counts: list[int] = field(default_factory=list)  # stored cells per frame

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.size / 2

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.size / 2


@dataclass
class CameraPose:
    position: np.ndarray   # (3,)
    rotation: np.ndarray   # (3, 3) columns: right, image-down, forward


@dataclass
class GroundTruth:
    seed: int
    objects: list[ObjectTruth]
    poses: list[CameraPose]
    grid: tuple[int, int]
    granularity: Granularity
    room: tuple[float, float, float]
    focal: float

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "granularity": self.granularity.name,
            "grid": list(self.grid),
            "room": list(self.room),
            "focal": self.focal,
            "objects": [
                {
                    "label": o.label,
                    "category": o.category,
                    "center": o.center.tolist(),
                    "size": o.size.tolist(),
                    "patch_counts": list(o.patch_counts),
                }
                for o in self.objects
            ],
            "poses": [
                {"position": p.position.tolist(), "rotation": p.rotation.tolist()}
                for p in self.poses
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def _look_at(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward], axis=1)


def _cell_directions(rows: int, cols: int, focal: float) -> np.ndarray:
    """Unnormalized camera-frame ray directions through cell centers."""
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    x = (c + 0.5 - cols / 2.0) / focal
    y = (r + 0.5 - rows / 2.0) / focal
    return np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3)


def _slab(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray,
          hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Entry/exit ray parameters against one AABB, parallel rays handled."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin) / dirs
        t2 = (hi - origin) / dirs
    parallel = dirs == 0.0
    inside = (origin >= lo) & (origin <= hi)
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf),
                      np.minimum(t1, t2))
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf),
                     np.maximum(t1, t2))
    return t_near.max(axis=-1), t_far.min(axis=-1)


def _render_cells(origin, dirs, objects, room_lo, room_hi):
    """Nearest box hit per ray, room shell as background, exact points."""
    _, t_exit = _slab(origin, dirs, room_lo, room_hi)
    best_t = t_exit.copy()
    labels = np.full(len(dirs), -1, dtype=np.int32)
    for obj in objects:
        t_near, t_far = _slab(origin, dirs, obj.lo, obj.hi)
        hit = (t_far >= t_near) & (t_near > 1e-9) & (t_near < best_t)
        best_t[hit] = t_near[hit]
        labels[hit] = obj.label
    points = origin + best_t[:, None] * dirs
    return points, labels


def _place_objects(spec: SceneSpec, rng, camera_positions) -> list[ObjectTruth]:
    room = np.asarray(spec.room, dtype=np.float64)
    room_lo = np.array([-room[0] / 2, -room[1] / 2, 0.0])
    room_hi = np.array([room[0] / 2, room[1] / 2, room[2]])
    placed: list[ObjectTruth] = []
    for label in range(spec.objects):
        for _ in range(spec.max_attempts):
            size = rng.uniform(0.10, 0.28, 3) * room
            lo_c = room_lo + size / 2 + _PLACE_MARGIN
            hi_c = room_hi - size / 2 - _PLACE_MARGIN
            if (hi_c <= lo_c).any():
                continue
            center = rng.uniform(lo_c, hi_c)
            half = size / 2
            overlap = any(
                (np.abs(center - other.center)
                 < (size + other.size) / 2 + _BOX_GAP).all()
                for other in placed)
            camera_inside = any(
                (np.abs(pos - center) < half + _CAMERA_CLEARANCE).all()
                for pos in camera_positions)
            if overlap or camera_inside:
                continue
            placed.append(ObjectTruth(label=label, category=0,
                                      center=center, size=size))
            break
        else:
            raise PlacementFailure(
                f"could not place object {label} after {spec.max_attempts} attempts")
    categories = rng.integers(0, 213, spec.objects)
    for obj, cat in zip(placed, categories):
        obj.category = int(cat)
    return placed


def generate_scene(spec: SceneSpec) -> tuple[SceneBundle, GroundTruth]:
    """Render the spec into a scene bundle plus its exact ground truth."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    room = np.asarray(spec.room, dtype=np.float64)
    room_lo = np.array([-room[0] / 2, -room[1] / 2, 0.0])
    room_hi = np.array([room[0] / 2, room[1] / 2, room[2]])

    radius = 0.40 * min(room[0], room[1])
    cam_height = 0.55 * room[2]
    target = np.array([0.0, 0.0, 0.45 * room[2]])
    poses = []
    for i in range(spec.frames):
        angle = 2.0 * np.pi * i / max(spec.frames, 1)
        position = np.array([radius * np.cos(angle), radius * np.sin(angle),
                             cam_height])
        poses.append(CameraPose(position, _look_at(position, target)))

    objects = _place_objects(spec, rng, [p.position for p in poses])

    if spec.pixel_q is not None:
        granularity = Granularity.PIXEL
        gh, gw = spec.pixel_q * spec.patch_h, spec.pixel_q * spec.patch_w
        height, width = gh, gw
    else:
        granularity = Granularity.PATCH
        gh, gw = spec.patch_h, spec.patch_w
        height = width = spec.image_size

    focal = 0.5 * max(gh, gw) / np.tan(spec.fov / 2)
    cam_dirs = _cell_directions(gh, gw, focal)

    registry = EmbeddingRegistry(seed=spec.seed, channels=spec.channels)
    protos = np.zeros((spec.objects + 1, spec.channels))
    for obj in objects:
        protos[obj.label + 1] = registry.semantic_embedding(obj.category)

    frames = []
    for i, pose in enumerate(poses):
        world_dirs = cam_dirs @ pose.rotation.T
        points, labels = _render_cells(pose.position, world_dirs, objects,
                                       room_lo, room_hi)
        counts = np.bincount(labels[labels >= 0], minlength=spec.objects)
        for obj in objects:
            obj.patch_counts.append(int(counts[obj.label]))

        if granularity is Granularity.PATCH:
            cell_labels = labels.reshape(gh, gw)
            base = protos[cell_labels + 1]
        else:
            pixel_labels = labels.reshape(gh, gw)
            patch_labels = np.empty((spec.patch_h, spec.patch_w), dtype=np.int64)
            q = spec.pixel_q
            for r in range(spec.patch_h):
                for c in range(spec.patch_w):
                    patch_labels[r, c] = dominant_label(
                        pixel_labels[r * q:(r + 1) * q, c * q:(c + 1) * q])
            base = protos[patch_labels + 1]

        noise = rng.normal(0.0, spec.noise_std,
                           (spec.patch_h, spec.patch_w, spec.channels))
        frames.append(FrameRecord(
            frame_index=i,
            features=(base + noise).astype(np.float32),
            points=points.reshape(gh, gw, 3).astype(np.float32),
            labels=labels.reshape(gh, gw).astype(np.int32),
        ))

    bundle = SceneBundle(frames, granularity, height, width,
                         spec.patch_h, spec.patch_w, spec.channels)
    bundle.validate()
    truth = GroundTruth(
        seed=spec.seed, objects=objects, poses=poses,
        grid=(spec.patch_h, spec.patch_w), granularity=granularity,
        room=tuple(spec.room), focal=float(focal),
    )
    return bundle, truth


def perturb(bundle: SceneBundle, kind: str, *, offset=None, permutation=None,
            frame: int | None = None) -> SceneBundle:
    """Controlled transforms for equivariance tests.

    translate: add `offset` to every stored 3D point.
    permute-frames: new frame i carries the payload of old frame
    permutation[i]; frame indices keep their original ascending values.
    drop-frame: remove the frame at list position `frame`.
    """
    if kind == "translate":
        off = np.asarray(offset, dtype=np.float64)
        frames = [FrameRecord(f.frame_index,
                              f.features.copy(),
                              (f.points.astype(np.float64) + off).astype(np.float32),
                              f.labels.copy())
                  for f in bundle.frames]
    elif kind == "permute-frames":
        perm = list(permutation)
        if sorted(perm) != list(range(len(bundle.frames))):
            raise ValueError("permutation must cover all frame positions")
        frames = [FrameRecord(bundle.frames[i].frame_index,
                              bundle.frames[j].features,
                              bundle.frames[j].points,
                              bundle.frames[j].labels)
                  for i, j in enumerate(perm)]
    elif kind == "drop-frame":
        if frame is None or not 0 <= frame < len(bundle.frames):
            raise ValueError(f"frame position {frame} out of range")
        frames = [f for i, f in enumerate(bundle.frames) if i != frame]
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    return SceneBundle(frames, bundle.granularity, bundle.height, bundle.width,
                       bundle.patch_h, bundle.patch_w, bundle.channels)
