import numpy as np
import pytest

from px3d.containers import FrameRecord, Granularity, SceneBundle


def make_patch_bundle(seed=0, frames=2, patch_h=3, patch_w=4, channels=5,
                      n_labels=3, background=True):
    """Random PATCH-granularity bundle with finite points."""
    rng = np.random.default_rng(seed)
    low = -1 if background else 0
    recs = []
    for i in range(frames):
        recs.append(FrameRecord(
            frame_index=i,
            features=rng.normal(size=(patch_h, patch_w, channels)).astype(np.float32),
            points=rng.uniform(-4, 4, size=(patch_h, patch_w, 3)).astype(np.float32),
            labels=rng.integers(low, n_labels, size=(patch_h, patch_w)).astype(np.int32),
        ))
    return SceneBundle(recs, Granularity.PATCH, 64, 64, patch_h, patch_w, channels)


def make_pixel_bundle(seed=0, frames=1, patch_h=2, patch_w=3, q=2, channels=4,
                      n_labels=3):
    rng = np.random.default_rng(seed)
    h, w = q * patch_h, q * patch_w
    recs = []
    for i in range(frames):
        recs.append(FrameRecord(
            frame_index=i,
            features=rng.normal(size=(patch_h, patch_w, channels)).astype(np.float32),
            points=rng.uniform(-4, 4, size=(h, w, 3)).astype(np.float32),
            labels=rng.integers(-1, n_labels, size=(h, w)).astype(np.int32),
        ))
    return SceneBundle(recs, Granularity.PIXEL, h, w, patch_h, patch_w, channels)


@pytest.fixture
def patch_bundle():
    return make_patch_bundle()
