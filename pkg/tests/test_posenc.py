import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from px3d.cluster import Proxy
from px3d.errors import DivergenceDetected, OddChannels
from px3d.posenc import (
    AlignConfig,
    PosEncParams,
    encode,
    fourier_forward,
    fourier_grad,
    rope_rotate,
    train_coordinate_alignment,
    vert_index,
)


@pytest.fixture
def params():
    return PosEncParams.init(channels=8, fourier_dim=6, hidden_dim=10, seed=3)


def make_proxy(coord, feature):
    return Proxy(feature=np.asarray(feature, dtype=np.float64),
                 coord=np.asarray(coord, dtype=np.float64),
                 group_label=0, rank=0, member_count=1)


class TestVertIndex:
    def test_at_minimum(self, params):
        assert vert_index([0, 0, 1.25], z_min=1.25, params=params) == 0

    def test_exact_bin(self, params):
        z = 1.25 + 10 * params.vert_bin
        assert vert_index([0, 0, z], z_min=1.25, params=params) == 10

    def test_clamped_above(self, params):
        assert vert_index([0, 0, 1e9], z_min=0.0, params=params) == 1023

    def test_clamped_below(self, params):
        assert vert_index([0, 0, -5.0], z_min=0.0, params=params) == 0


class TestRopeRotate:
    def test_zero_index_identity(self, params):
        z = np.arange(8, dtype=np.float64)
        assert np.array_equal(rope_rotate(z, 0, params), z)

    def test_quarter_turn(self):
        # with one channel pair the rotation angle is the raw index for any
        # base, so the quarter turn is driven by the index itself
        p = PosEncParams.init(channels=2, fourier_dim=2, hidden_dim=2, seed=0)
        out = rope_rotate(np.array([1.0, 0.0]), np.pi / 2, p)
        assert np.abs(out - [0.0, 1.0]).max() < 1e-12

    def test_odd_channels_rejected(self, params):
        with pytest.raises(OddChannels):
            rope_rotate(np.zeros(7), 1, params)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_norm_preserved(self, seed):
        rng = np.random.default_rng(seed)
        p = PosEncParams.init(channels=64, seed=0)
        z = rng.normal(size=64)
        idx = int(rng.integers(0, 1024))
        r = rope_rotate(z, idx, p)
        assert abs(np.linalg.norm(r) - np.linalg.norm(z)) <= \
            1e-12 * np.linalg.norm(z)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_relative_shift_identity(self, seed):
        # <R(a)x, R(b)y> = <R(a-b)x, y>
        rng = np.random.default_rng(seed)
        p = PosEncParams.init(channels=32, seed=0)
        x, y = rng.normal(size=32), rng.normal(size=32)
        a, b = rng.uniform(0, 100, 2)
        lhs = rope_rotate(x, a, p) @ rope_rotate(y, b, p)
        rhs = rope_rotate(x, a - b, p) @ y
        assert abs(lhs - rhs) < 1e-9

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_index_additivity(self, seed):
        # R(a) R(b) = R(a+b)
        rng = np.random.default_rng(seed)
        p = PosEncParams.init(channels=16, seed=0)
        z = rng.normal(size=16)
        a, b = rng.uniform(0, 50, 2)
        composed = rope_rotate(rope_rotate(z, b, p), a, p)
        direct = rope_rotate(z, a + b, p)
        assert np.abs(composed - direct).max() < 1e-9


def fourier_oracle(params, plane):
    """Independent re-implementation: per-lane loops instead of matmuls."""
    half = params.fourier_dirs.shape[0]
    s = [params.fourier_dirs[i, 0] * plane[0] + params.fourier_dirs[i, 1] * plane[1]
         for i in range(half)]
    gamma = np.array([np.cos(v) for v in s] + [np.sin(v) for v in s])
    gamma = gamma / np.sqrt(2 * half)
    h = params.w1 @ gamma + params.b1
    h = np.array([v / (1.0 + np.exp(-v)) for v in h])
    return params.w2 @ h + params.b2


class TestFourierForward:
    def test_zero_dirs_frozen_input(self):
        p = PosEncParams.zeros(channels=4, fourier_dim=6, hidden_dim=5)
        p.w1 = np.random.default_rng(0).normal(size=p.w1.shape)
        p.w2 = np.random.default_rng(1).normal(size=p.w2.shape)
        out1 = fourier_forward(p, [0.0, 0.0])
        out2 = fourier_forward(p, [123.0, -42.0])
        # zero directions freeze gamma, so the output ignores the plane
        assert np.array_equal(out1, out2)
        gamma = np.concatenate([np.ones(3), np.zeros(3)]) / np.sqrt(6)
        h1 = p.w1 @ gamma
        expected = p.w2 @ (h1 / (1 + np.exp(-h1)))
        assert np.abs(out1 - expected).max() < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_matches_independent_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p = PosEncParams.init(channels=6, fourier_dim=8, hidden_dim=7,
                              seed=seed)
        plane = rng.uniform(-5, 5, 2)
        assert np.abs(fourier_forward(p, plane)
                      - fourier_oracle(p, plane)).max() < 1e-12

    def test_batched_matches_single(self, params):
        # batch and vector paths take different BLAS kernels, allow ulp noise
        rng = np.random.default_rng(4)
        planes = rng.normal(size=(5, 2))
        batched = fourier_forward(params, planes)
        for i in range(5):
            assert np.abs(batched[i]
                          - fourier_forward(params, planes[i])).max() < 1e-12


class TestFourierGrad:
    def test_zero_upstream(self, params):
        g = fourier_grad(params, [0.3, -0.4], np.zeros(8))
        for arr in (g.dirs, g.w1, g.b1, g.w2, g.b2, g.plane):
            assert np.all(arr == 0)

    def test_bias2_gradient_is_upstream(self, params):
        up = np.random.default_rng(2).normal(size=8)
        g = fourier_grad(params, [0.3, -0.4], up)
        assert np.array_equal(g.b2, up)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        p = PosEncParams.init(channels=4, fourier_dim=6, hidden_dim=5, seed=seed)
        plane = rng.uniform(-2, 2, 2)
        up = rng.normal(size=4)
        g = fourier_grad(params=p, plane=plane, upstream=up)
        h = 1e-5

        def objective():
            return up @ fourier_forward(p, plane)

        checks = []
        for arr, grad in ((p.fourier_dirs, g.dirs), (p.w1, g.w1),
                          (p.b1, g.b1), (p.w2, g.w2), (p.b2, g.b2)):
            ix = tuple(rng.integers(0, s) for s in arr.shape)
            arr[ix] += h
            f_plus = objective()
            arr[ix] -= 2 * h
            f_minus = objective()
            arr[ix] += h
            checks.append((grad[ix], (f_plus - f_minus) / (2 * h)))
        pl = plane.copy()
        for axis in range(2):
            plane[axis] += h
            f_plus = objective()
            plane[axis] -= 2 * h
            f_minus = objective()
            plane[axis] = pl[axis]
            checks.append((g.plane[axis], (f_plus - f_minus) / (2 * h)))
        for analytic, fd in checks:
            assert abs(analytic - fd) < 1e-5 * max(abs(fd), 1e-6)


class TestEncode:
    def test_identity_when_unpositioned(self):
        p = PosEncParams.zeros(channels=6, fourier_dim=4, hidden_dim=4)
        feature = np.arange(6, dtype=np.float64)
        proxy = make_proxy([2.0, 3.0, 1.0], feature)
        out = encode(proxy, p, z_min=1.0)  # vertical index 0, zero Fourier
        assert out.vert_index == 0
        assert np.array_equal(out.feature, feature)

    def test_zero_feature_leaves_fourier_only(self, params):
        proxy = make_proxy([0.5, -0.5, 2.0], np.zeros(8))
        out = encode(proxy, params, z_min=0.0)
        assert np.array_equal(out.feature,
                              fourier_forward(params, [0.5, -0.5]))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_composition(self, seed):
        rng = np.random.default_rng(seed)
        p = PosEncParams.init(channels=8, fourier_dim=6, hidden_dim=10, seed=seed)
        proxy = make_proxy(rng.uniform(-3, 3, 3), rng.normal(size=8))
        out = encode(proxy, p, z_min=-3.0)
        expected = rope_rotate(proxy.feature,
                               vert_index(proxy.coord, -3.0, p), p) \
            + fourier_forward(p, proxy.coord[:2])
        assert np.array_equal(out.feature, expected)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_linear_in_feature(self, seed):
        rng = np.random.default_rng(seed)
        p = PosEncParams.init(channels=8, fourier_dim=6, hidden_dim=10, seed=seed)
        coord = rng.uniform(-2, 2, 3)
        z1, z2 = rng.normal(size=8), rng.normal(size=8)
        alpha, beta = rng.normal(size=2)
        four = fourier_forward(p, coord[:2])
        combined = encode(make_proxy(coord, alpha * z1 + beta * z2), p, 0.0)
        part1 = encode(make_proxy(coord, z1), p, 0.0).feature - four
        part2 = encode(make_proxy(coord, z2), p, 0.0).feature - four
        assert np.abs((combined.feature - four)
                      - (alpha * part1 + beta * part2)).max() < 1e-12


class TestTrainer:
    def test_zero_steps_reports_initial_state(self):
        m = train_coordinate_alignment(AlignConfig(steps=0, samples=64,
                                                   eval_samples=32))
        assert m["steps"] == 0
        assert m["loss_curve"] == []
        assert len(m["r2"]) == 3

    def test_zero_lr_constant_loss(self):
        m = train_coordinate_alignment(AlignConfig(steps=40, lr=0.0,
                                                   samples=64, eval_samples=16,
                                                   batch=16))
        curve = m["loss_curve"]
        assert len(curve) == 40
        assert all(v == curve[0] for v in curve)

    def test_divergence_detected(self):
        with pytest.raises(DivergenceDetected):
            train_coordinate_alignment(AlignConfig(steps=50, lr=1e200,
                                                   samples=64, eval_samples=16,
                                                   batch=16))

    def test_loss_decreases_in_short_run(self):
        m = train_coordinate_alignment(AlignConfig(steps=300, samples=256,
                                                   eval_samples=64, batch=64))
        assert m["loss_curve"][-1] < m["loss_curve"][0]
