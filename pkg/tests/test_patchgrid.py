from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from px3d.containers import FrameRecord, Granularity, SceneBundle
from px3d.errors import GridMismatch
from px3d.patchgrid import dominant_label, flatten_scene, patch_point
from conftest import make_patch_bundle


def counting_oracle(labels):
    counts = Counter(int(v) for v in np.asarray(labels).ravel() if v >= -1)
    best = max(counts.values())
    return min(lab for lab, n in counts.items() if n == best)


class TestDominantLabel:
    def test_uniform(self):
        assert dominant_label(np.full((2, 2), 5)) == 5

    def test_majority(self):
        assert dominant_label(np.array([[7, 7], [7, 2]])) == 7

    def test_tie_smallest_label(self):
        assert dominant_label(np.array([[1, 1], [2, 2]])) == 1

    def test_background_competes(self):
        assert dominant_label(np.array([[-1, -1], [5, 3]])) == -1

    @settings(max_examples=100)
    @given(seed=st.integers(0, 10_000), q=st.integers(1, 4))
    def test_matches_counting_oracle(self, seed, q):
        rng = np.random.default_rng(seed)
        labels = rng.integers(-1, 4, size=(q, q))
        assert dominant_label(labels) == counting_oracle(labels)


class TestPatchPoint:
    def test_single_pixel(self):
        pts = np.array([[[1.0, 2.0, 3.0]]])
        assert np.array_equal(patch_point(pts, np.array([[4]]), 4), [1, 2, 3])

    def test_mean_over_dominant_pixels(self):
        pts = np.array([[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
                        [[9.0, 9.0, 9.0], [9.0, 9.0, 9.0]]])
        labels = np.array([[4, 4], [1, 1]])
        # hand mean over the two dominant pixels
        assert np.array_equal(patch_point(pts, labels, 4), [1.0, 0.0, 0.0])

    def test_fallback_to_all_finite(self):
        pts = np.array([[[np.nan, 0.0, 0.0], [4.0, 2.0, 0.0]]])
        labels = np.array([[3, 1]])
        # dominant label 3 has no finite depth, mean over remaining finite
        assert np.array_equal(patch_point(pts, labels, 3), [4.0, 2.0, 0.0])

    def test_all_nonfinite_is_invalid(self):
        pts = np.full((1, 2, 3), np.nan)
        assert patch_point(pts, np.array([[1, 1]]), 1) is None


def pixel_from_patch(bundle: SceneBundle, q: int) -> SceneBundle:
    """Upsample a PATCH bundle to the equivalent label-uniform PIXEL bundle."""
    frames = []
    for f in bundle.frames:
        frames.append(FrameRecord(
            frame_index=f.frame_index,
            features=f.features.copy(),
            points=np.repeat(np.repeat(f.points, q, axis=0), q, axis=1),
            labels=np.repeat(np.repeat(f.labels, q, axis=0), q, axis=1),
        ))
    return SceneBundle(frames, Granularity.PIXEL, q * bundle.patch_h,
                       q * bundle.patch_w, bundle.patch_h, bundle.patch_w,
                       bundle.channels)


class TestFlattenScene:
    def test_patch_is_reindexing(self):
        bundle = make_patch_bundle(seed=8)
        out = flatten_scene(bundle)
        expected = sum(int((f.labels >= 0).sum()) for f in bundle.frames)
        assert len(out) == expected
        for t in out:
            f = bundle.frames[t.frame_index]
            assert t.label == f.labels[t.patch_row, t.patch_col]
            assert np.array_equal(
                t.point, f.points[t.patch_row, t.patch_col].astype(np.float64))

    def test_background_leaves_index_gap(self):
        labels = np.array([[0, 1], [-1, 2]], dtype=np.int32)
        rng = np.random.default_rng(0)
        frame = FrameRecord(0, rng.normal(size=(2, 2, 3)).astype(np.float32),
                            rng.normal(size=(2, 2, 3)).astype(np.float32), labels)
        bundle = SceneBundle([frame], Granularity.PATCH, 8, 8, 2, 2, 3)
        out = flatten_scene(bundle)
        assert [t.global_index for t in out] == [0, 1, 3]

    def test_grid_mismatch(self):
        bundle = make_patch_bundle(seed=0, patch_h=1, patch_w=1)
        bundle.granularity = Granularity.PIXEL
        bundle.height = bundle.width = 4
        rng = np.random.default_rng(0)
        bundle.frames = [FrameRecord(
            0, bundle.frames[0].features,
            rng.normal(size=(4, 4, 3)).astype(np.float32),
            np.zeros((4, 4), dtype=np.int32))]
        with pytest.raises(GridMismatch):
            flatten_scene(bundle, patch_size=3)

    def test_pixel_requires_patch_size(self):
        bundle = pixel_from_patch(make_patch_bundle(seed=1), q=2)
        with pytest.raises(GridMismatch):
            flatten_scene(bundle)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), q=st.integers(1, 3))
    def test_label_uniform_pixel_equals_patch_oracle(self, seed, q):
        patch = make_patch_bundle(seed=seed, frames=2, patch_h=2, patch_w=3,
                                  channels=4)
        pixel = pixel_from_patch(patch, q)
        a = flatten_scene(patch)
        b = flatten_scene(pixel, patch_size=q)
        assert len(a) == len(b)
        for ta, tb in zip(a, b):
            assert ta.global_index == tb.global_index
            assert ta.label == tb.label
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.point, tb.point)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), threads=st.integers(1, 4))
    def test_global_index_strictly_increasing(self, seed, threads):
        bundle = make_patch_bundle(seed=seed, frames=3)
        out = flatten_scene(bundle, threads=threads)
        idx = [t.global_index for t in out]
        assert all(a < b for a, b in zip(idx, idx[1:]))

    def test_thread_count_does_not_change_output(self):
        bundle = make_patch_bundle(seed=11, frames=4)
        a = flatten_scene(bundle, threads=1)
        b = flatten_scene(bundle, threads=4)
        assert [t.global_index for t in a] == [t.global_index for t in b]
        assert all(np.array_equal(x.feature, y.feature) for x, y in zip(a, b))
