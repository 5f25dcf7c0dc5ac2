"""Align pixel-level masks/point maps to the feature patch grid and flatten
frames into per-patch triplets.

A pixel-granularity frame stores points/labels at (H, W) while features live
on the (patch_h, patch_w) grid; each q x q pixel block is reduced to one
label by largest-area vote and one 3D point by averaging the winning
object's finite points. Patch-granularity frames are already aligned and
flatten by re-indexing.

Background (label -1) and depth-invalid patches are dropped: proxies only
represent segmented content.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .containers import Granularity, SceneBundle
from .errors import GridMismatch


@dataclass(slots=True)
class PatchTriplet:
    """One flattened patch: feature vector, representative 3D point, label.

    global_index = frame_index * patch_h * patch_w + patch_row * patch_w
    + patch_col, so triplet order is stable across runs and thread counts.
    """

    feature: np.ndarray  # (C,) float64
    point: np.ndarray    # (3,) float64
    label: int
    frame_index: int
    patch_row: int
    patch_col: int
    global_index: int


def dominant_label(patch_labels: np.ndarray) -> int:
    """Label covering the largest pixel area in the patch.

    Background (-1) competes like any other label; count ties go to the
    smallest label value.
    """
    flat = np.asarray(patch_labels).ravel()
    if flat.size == 0:
        raise ValueError("patch must be non-empty")
    values, counts = np.unique(flat[flat >= -1], return_counts=True)
    # np.unique sorts ascending, argmax takes the first max: smallest label wins ties
    return int(values[np.argmax(counts)])


def patch_point(patch_points: np.ndarray, patch_labels: np.ndarray,
                dominant: int) -> np.ndarray | None:
    """Representative 3D point for a patch given its dominant label.

    Averages the finite points belonging to the dominant object (its area
    inside the patch). Falls back to the mean of all finite points when the
    dominant object has no finite depth; returns None when nothing in the
    patch has finite depth.
    """
    pts = np.asarray(patch_points, dtype=np.float64).reshape(-1, 3)
    labels = np.asarray(patch_labels).ravel()
    finite = np.isfinite(pts).all(axis=1)
    chosen = finite & (labels == dominant)
    if not chosen.any():
        chosen = finite
    if not chosen.any():
        return None
    return pts[chosen].sum(axis=0) / chosen.sum()


def _flatten_patch_frame(frame, bundle: SceneBundle) -> list[PatchTriplet]:
    per_frame = bundle.patch_h * bundle.patch_w
    base = frame.frame_index * per_frame
    rows, cols = np.nonzero(frame.labels >= 0)
    # promote only the kept patches to float64
    feats = frame.features[rows, cols].astype(np.float64)
    pts = frame.points[rows, cols].astype(np.float64)
    labels = frame.labels[rows, cols]
    out = []
    for i, (r, c, lab) in enumerate(zip(rows.tolist(), cols.tolist(),
                                        labels.tolist())):
        out.append(PatchTriplet(
            feature=feats[i],
            point=pts[i],
            label=lab,
            frame_index=frame.frame_index,
            patch_row=r,
            patch_col=c,
            global_index=base + r * bundle.patch_w + c,
        ))
    return out


def _flatten_pixel_frame(frame, bundle: SceneBundle, q: int) -> list[PatchTriplet]:
    per_frame = bundle.patch_h * bundle.patch_w
    base = frame.frame_index * per_frame
    feats = frame.features.astype(np.float64)
    out = []
    for r in range(bundle.patch_h):
        for c in range(bundle.patch_w):
            block_labels = frame.labels[r * q:(r + 1) * q, c * q:(c + 1) * q]
            dom = dominant_label(block_labels)
            if dom < 0:
                continue
            block_points = frame.points[r * q:(r + 1) * q, c * q:(c + 1) * q]
            point = patch_point(block_points, block_labels, dom)
            if point is None:
                continue
            out.append(PatchTriplet(
                feature=feats[r, c],
                point=point,
                label=dom,
                frame_index=frame.frame_index,
                patch_row=r,
                patch_col=c,
                global_index=base + r * bundle.patch_w + c,
            ))
    return out


def flatten_scene(bundle: SceneBundle, patch_size: int | None = None,
                  threads: int = 1) -> list[PatchTriplet]:
    """Flatten every frame into triplets, ascending global index.

    patch_size (q) is required for PIXEL granularity and must satisfy
    H = q * patch_h and W = q * patch_w; it is ignored for PATCH bundles.
    Frames may be flattened concurrently; the merge preserves frame order.
    """
    if bundle.granularity is Granularity.PIXEL:
        q = patch_size
        if q is None or q < 1:
            raise GridMismatch(
                "pixel-granularity bundles need a positive patch size")
        if q * bundle.patch_h != bundle.height or q * bundle.patch_w != bundle.width:
            raise GridMismatch(
                f"patch size {q} x grid ({bundle.patch_h}, {bundle.patch_w}) "
                f"does not tile pixels ({bundle.height}, {bundle.width})")
        work = lambda f: _flatten_pixel_frame(f, bundle, q)
    else:
        work = lambda f: _flatten_patch_frame(f, bundle)

    if threads > 1 and len(bundle.frames) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_frame = list(pool.map(work, bundle.frames))
    else:
        per_frame = [work(f) for f in bundle.frames]

    out: list[PatchTriplet] = []
    for chunk in per_frame:
        out.extend(chunk)
    return out
