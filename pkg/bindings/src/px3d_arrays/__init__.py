"""Array-first surface over the px3d scene token compiler.

Encoder ecosystems hold features/points/labels as in-memory arrays; this
package writes PX3D scene files straight from stacked arrays and runs
compression returning arrays, no files or subprocesses involved.

The boundary is strict: exactly float32/int32, C-contiguous, declared
shapes. Nothing is cast implicitly, so files written here are byte
identical to the core writer's output and compression results are bit
exact with the CLI.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from px3d.containers import (
    FrameRecord,
    Granularity,
    SceneBundle,
    read_scene as _read_bundle,
    write_scene as _write_bundle,
    read_tokens as _read_tokens,
)
from px3d.pipeline import CompressConfig, compress_bundle

__all__ = [
    "BindingError",
    "CompressResult",
    "compress",
    "inspect",
    "read_scene",
    "write_scene_from_arrays",
]


class BindingError(ValueError):
    """Shape or dtype contract violation at the array boundary."""


class CompressResult(NamedTuple):
    tokens: np.ndarray        # (K, C) float32
    coords: np.ndarray        # (K, 3) float32
    group_labels: np.ndarray  # (K,)  int32
    meta: dict


def _check(name: str, arr, dtype: np.dtype, ndim: int) -> np.ndarray:
    if not isinstance(arr, np.ndarray):
        raise BindingError(f"{name}: expected a numpy array, got {type(arr).__name__}")
    if arr.dtype != dtype:
        raise BindingError(
            f"{name}: expected {np.dtype(dtype).name}, got {arr.dtype.name} "
            f"(no implicit casts)")
    if arr.ndim != ndim:
        raise BindingError(f"{name}: expected {ndim} axes, got {arr.ndim}")
    if not arr.flags.c_contiguous:
        raise BindingError(f"{name}: array must be C-contiguous")
    return arr


def _check_axis(name: str, axis: int, meaning: str, got: int, want: int) -> None:
    if got != want:
        raise BindingError(
            f"{name} axis {axis} ({meaning}): expected {want}, got {got}")


def _bundle_from_arrays(features, points, labels, frame_indices=None,
                        granularity="PATCH", height=None,
                        width=None) -> SceneBundle:
    features = _check("features", features, np.float32, 4)
    points = _check("points", points, np.float32, 4)
    labels = _check("labels", labels, np.int32, 3)

    n, patch_h, patch_w, channels = features.shape
    _check_axis("points", 0, "frames", points.shape[0], n)
    _check_axis("labels", 0, "frames", labels.shape[0], n)
    _check_axis("points", 3, "xyz", points.shape[3], 3)
    gh, gw = points.shape[1], points.shape[2]
    _check_axis("labels", 1, "rows", labels.shape[1], gh)
    _check_axis("labels", 2, "cols", labels.shape[2], gw)

    try:
        gran = Granularity[granularity] if isinstance(granularity, str) \
            else Granularity(granularity)
    except KeyError:
        raise BindingError(f"granularity must be PIXEL or PATCH, got {granularity!r}")

    if gran is Granularity.PATCH:
        _check_axis("points", 1, "patch rows", gh, patch_h)
        _check_axis("points", 2, "patch cols", gw, patch_w)
        height = patch_h if height is None else height
        width = patch_w if width is None else width
    else:
        height = gh if height is None else height
        width = gw if width is None else width
        _check_axis("points", 1, "pixel rows", gh, height)
        _check_axis("points", 2, "pixel cols", gw, width)

    if frame_indices is None:
        frame_indices = range(n)
    frame_indices = [int(i) for i in frame_indices]
    if len(frame_indices) != n:
        raise BindingError(
            f"frame_indices: expected {n} entries, got {len(frame_indices)}")

    frames = [FrameRecord(idx, features[i], points[i], labels[i])
              for i, idx in enumerate(frame_indices)]
    bundle = SceneBundle(frames, gran, height, width, patch_h, patch_w,
                         channels)
    bundle.validate()
    return bundle


def write_scene_from_arrays(path, features, points, labels,
                            frame_indices=None, granularity="PATCH",
                            height=None, width=None) -> None:
    """Write a PX3D scene file from stacked per-frame arrays.

    features  (N, patch_h, patch_w, C) float32
    points    (N, gh, gw, 3)           float32
    labels    (N, gh, gw)              int32
    gh/gw are the patch grid for PATCH granularity, pixels for PIXEL.
    """
    bundle = _bundle_from_arrays(features, points, labels, frame_indices,
                                 granularity, height, width)
    _write_bundle(bundle, path)


def read_scene(path) -> dict:
    """Read a PX3D file into stacked arrays (empty leading axis if no
    frames)."""
    bundle = _read_bundle(path)
    gh, gw = bundle.geometry_shape()

    def stacked(getter, shape, dtype):
        if bundle.frames:
            return np.stack([getter(f) for f in bundle.frames])
        return np.zeros((0, *shape), dtype=dtype)

    return {
        "features": stacked(lambda f: f.features,
                            (bundle.patch_h, bundle.patch_w, bundle.channels),
                            np.float32),
        "points": stacked(lambda f: f.points, (gh, gw, 3), np.float32),
        "labels": stacked(lambda f: f.labels, (gh, gw), np.int32),
        "frame_indices": np.asarray([f.frame_index for f in bundle.frames],
                                    dtype=np.int64),
        "granularity": bundle.granularity.name,
        "height": bundle.height,
        "width": bundle.width,
        "patch_h": bundle.patch_h,
        "patch_w": bundle.patch_w,
        "channels": bundle.channels,
    }


def compress(source, **options) -> CompressResult:
    """Compress a scene into proxy token arrays.

    source is either a PX3D file path or the dict produced by read_scene
    (equivalently, the write_scene_from_arrays keyword set). Options mirror
    the CLI: tokens, min_proxies, per_label_override, edges, posenc, refer,
    seed, threads, patch_size.
    """
    if isinstance(source, dict):
        bundle = _bundle_from_arrays(
            source["features"], source["points"], source["labels"],
            source.get("frame_indices"), source.get("granularity", "PATCH"),
            source.get("height"), source.get("width"))
    else:
        bundle = _read_bundle(source)
    seq = compress_bundle(bundle, CompressConfig(**options))
    return CompressResult(tokens=seq.tokens, coords=seq.coords,
                          group_labels=seq.group_labels, meta=dict(seq.meta))


def inspect(path) -> dict:
    """Summary of a PXTK token file, same shape as the CLI's inspect --json."""
    seq = _read_tokens(path)
    return {
        "k": seq.k,
        "c": seq.channels,
        "groups": [
            {"label": e.label, "count": e.count,
             "centroid": [float(x) for x in e.centroid]}
            for e in seq.group_table
        ],
        "meta": seq.meta,
    }
