"""Compress one semantic group into proxies.

Cluster centers are picked by farthest point sampling over the group's 3D
points (seeded at the member with the smallest global index, so results are
bit-reproducible), members join their nearest center, and each cluster is
reduced to a single proxy: mean feature, center's exact 3D point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import KOutOfRange
from .groups import SemanticGroup
from .patchgrid import PatchTriplet


@dataclass(slots=True)
class Proxy:
    feature: np.ndarray  # (C,) float64, mean of member features
    coord: np.ndarray    # (3,) float64, the FPS center's point
    group_label: int
    rank: int            # FPS selection order within the group
    member_count: int


def fps_centers(points: np.ndarray, k: int) -> list[int]:
    """Greedy max-min center selection over rows of `points`.

    Rows must be ordered by ascending global index: the first center is row
    0 and distance ties resolve to the smallest row. Returns row indices in
    selection order.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise KOutOfRange(f"k={k} outside [1, {n}]")
    chosen = [0]
    # squared distances; chosen rows pinned to -1 so they never win argmax
    d2 = ((pts - pts[0]) ** 2).sum(axis=1)
    d2[0] = -1.0
    for _ in range(1, k):
        nxt = int(np.argmax(d2))  # first max: smallest row wins ties
        chosen.append(nxt)
        d2 = np.minimum(d2, ((pts - pts[nxt]) ** 2).sum(axis=1))
        d2[nxt] = -1.0
    return chosen


def assign_members(points: np.ndarray, centers: Sequence[int]) -> list[list[int]]:
    """Partition all rows among centers by nearest Euclidean distance.

    Ties go to the earlier-rank center. Each center is pinned to its own
    cluster, so every cluster is non-empty.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    d2 = np.empty((pts.shape[0], len(centers)))
    for rank, row in enumerate(centers):  # per-center columns stay contiguous
        d2[:, rank] = ((pts - pts[row]) ** 2).sum(axis=1)
    owner = np.argmin(d2, axis=1)  # first min: earliest rank wins ties
    for rank, row in enumerate(centers):
        owner[row] = rank
    return [np.nonzero(owner == rank)[0].tolist() for rank in range(len(centers))]


def aggregate_proxy(members: Sequence[PatchTriplet], center: PatchTriplet,
                    group_label: int, rank: int = 0) -> Proxy:
    """Reduce one cluster to a proxy: mean feature, the center's point."""
    if not members:
        raise ValueError("cluster must be non-empty")
    feats = np.stack([m.feature for m in members]).astype(np.float64)
    return Proxy(
        feature=feats.mean(axis=0),
        coord=np.asarray(center.point, dtype=np.float64).copy(),
        group_label=group_label,
        rank=rank,
        member_count=len(members),
    )


def cluster_group(group: SemanticGroup) -> list[Proxy]:
    """Run the full select-gather-aggregate chain for one group."""
    if group.allocated is None:
        raise ValueError(f"group {group.label} has no allocation")
    if group.allocated > group.size:
        raise KOutOfRange(
            f"group {group.label}: allocation {group.allocated} exceeds "
            f"size {group.size}")
    pts = np.stack([m.point for m in group.members])
    centers = fps_centers(pts, group.allocated)
    clusters = assign_members(pts, centers)
    return [
        aggregate_proxy([group.members[i] for i in idxs],
                        group.members[centers[rank]], group.label, rank)
        for rank, idxs in enumerate(clusters)
    ]
