"""3D positional encoding for proxy tokens and its alignment trainer.

A token's vertical position is quantized to an index and injected by a
rotary (norm-preserving) rotation of the feature channels; the horizontal
plane coordinates go through a learnable Fourier projection followed by a
small MLP whose output is added to the rotated feature:

    z' = R(vert_index(c)) z + F(c_x, c_y)

The Fourier branch ships with analytic gradients so a small Adam loop can
verify that coordinates are recoverable from encoded features (the
coordinate-alignment check): a linear read-out head and the Fourier/MLP
parameters are fit jointly to regress the 3D coordinate from z'.

All math is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import Proxy
from .containers import GroupEntry, ProxySequence
from .errors import DivergenceDetected, OddChannels

VERT_AXIS = 2        # z is up
PLANE_AXES = (0, 1)  # width/length plane


@dataclass
class PosEncParams:
    channels: int
    rope_base: float = 10000.0
    vert_bin: float = 0.05       # scene units per vertical index step
    vert_max_index: int = 1023
    fourier_dirs: np.ndarray = None   # (D_f/2, 2)
    w1: np.ndarray = None             # (D_h, D_f)
    b1: np.ndarray = None             # (D_h,)
    w2: np.ndarray = None             # (C, D_h)
    b2: np.ndarray = None             # (C,)
    init_seed: int = 0

    @property
    def fourier_dim(self) -> int:
        return 2 * self.fourier_dirs.shape[0]

    @classmethod
    def init(cls, channels: int, fourier_dim: int = 64, hidden_dim: int = 128,
             seed: int = 0, rope_base: float = 10000.0, vert_bin: float = 0.05,
             vert_max_index: int = 1023) -> "PosEncParams":
        """Seeded initialization: unit Gaussian Fourier directions, scaled
        Gaussian MLP weights, zero biases."""
        if channels % 2:
            raise OddChannels(f"channels must be even, got {channels}")
        if fourier_dim % 2:
            raise ValueError(f"fourier_dim must be even, got {fourier_dim}")
        rng = np.random.default_rng(seed)
        return cls(
            channels=channels,
            rope_base=rope_base,
            vert_bin=vert_bin,
            vert_max_index=vert_max_index,
            fourier_dirs=rng.normal(0.0, 1.0, (fourier_dim // 2, 2)),
            w1=rng.normal(0.0, 1.0 / np.sqrt(fourier_dim), (hidden_dim, fourier_dim)),
            b1=np.zeros(hidden_dim),
            w2=rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), (channels, hidden_dim)),
            b2=np.zeros(channels),
            init_seed=seed,
        )

    @classmethod
    def zeros(cls, channels: int, fourier_dim: int = 64, hidden_dim: int = 128,
              **kwargs) -> "PosEncParams":
        """All-zero Fourier branch: encode() reduces to the rotary part."""
        p = cls.init(channels, fourier_dim, hidden_dim, **kwargs)
        p.fourier_dirs = np.zeros_like(p.fourier_dirs)
        p.w1 = np.zeros_like(p.w1)
        p.w2 = np.zeros_like(p.w2)
        return p


@dataclass(slots=True)
class EncodedProxy:
    feature: np.ndarray   # (C,) float64
    vert_index: int
    plane: np.ndarray     # (2,) float64


def vert_index(coord, z_min: float, params: PosEncParams) -> int:
    """Quantize the vertical coordinate to a clamped bin index."""
    c = np.asarray(coord, dtype=np.float64)
    i = np.rint((c[VERT_AXIS] - z_min) / params.vert_bin)
    return int(np.clip(i, 0, params.vert_max_index))


def _vert_indices(coords: np.ndarray, z_min: float,
                  params: PosEncParams) -> np.ndarray:
    i = np.rint((coords[:, VERT_AXIS] - z_min) / params.vert_bin)
    return np.clip(i, 0, params.vert_max_index)


def rope_rotate(z, index, params: PosEncParams) -> np.ndarray:
    """Rotate consecutive channel pairs (z_2d, z_2d+1) by index * base^(-2d/C).

    Accepts a single vector or a batch (..., C) with a matching index array.
    Real-valued indices are allowed; encoding uses integer vertical indices.
    """
    z = np.asarray(z, dtype=np.float64)
    c = z.shape[-1]
    if c % 2:
        raise OddChannels(f"channel count must be even, got {c}")
    half = c // 2
    inv_freq = params.rope_base ** (-2.0 * np.arange(half) / c)
    angles = np.multiply.outer(np.asarray(index, dtype=np.float64), inv_freq)
    cos, sin = np.cos(angles), np.sin(angles)
    x, y = z[..., 0::2], z[..., 1::2]
    out = np.empty_like(z)
    out[..., 0::2] = x * cos - y * sin
    out[..., 1::2] = x * sin + y * cos
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp overflow saturates to inf and 1/(1+inf) = 0, which is the right limit
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _silu(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def _silu_grad(x: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def fourier_forward(params: PosEncParams, plane) -> np.ndarray:
    """Fourier features of the plane coordinates through the MLP.

    gamma = D_f^(-1/2) [cos(W p); sin(W p)], then affine -> silu -> affine.
    Accepts (2,) or a batch (..., 2).
    """
    p = np.asarray(plane, dtype=np.float64)
    s = p @ params.fourier_dirs.T
    scale = 1.0 / np.sqrt(params.fourier_dim)
    gamma = np.concatenate([np.cos(s), np.sin(s)], axis=-1) * scale
    h = _silu(gamma @ params.w1.T + params.b1)
    return h @ params.w2.T + params.b2


@dataclass
class FourierGrads:
    dirs: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    plane: np.ndarray


def fourier_grad(params: PosEncParams, plane, upstream) -> FourierGrads:
    """Analytic gradients of sum_b <upstream_b, fourier_forward(plane_b)>.

    Parameter gradients are summed over the batch; the plane gradient keeps
    the input's shape.
    """
    p_in = np.asarray(plane, dtype=np.float64)
    p = np.atleast_2d(p_in)
    u = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    s = p @ params.fourier_dirs.T
    scale = 1.0 / np.sqrt(params.fourier_dim)
    cos_s, sin_s = np.cos(s), np.sin(s)
    gamma = np.concatenate([cos_s, sin_s], axis=-1) * scale
    h1 = gamma @ params.w1.T + params.b1
    h = _silu(h1)

    d_w2 = u.T @ h
    d_b2 = u.sum(axis=0)
    d_h1 = (u @ params.w2) * _silu_grad(h1)
    d_w1 = d_h1.T @ gamma
    d_b1 = d_h1.sum(axis=0)
    d_gamma = d_h1 @ params.w1
    half = params.fourier_dirs.shape[0]
    d_s = (-sin_s * d_gamma[:, :half] + cos_s * d_gamma[:, half:]) * scale
    d_dirs = d_s.T @ p
    d_plane = d_s @ params.fourier_dirs
    return FourierGrads(d_dirs, d_w1, d_b1, d_w2, d_b2,
                        d_plane.reshape(p_in.shape))


def encode(proxy: Proxy, params: PosEncParams, z_min: float) -> EncodedProxy:
    """Positionally encode one proxy: rotate by the vertical index, add the
    Fourier embedding of the plane coordinates."""
    idx = vert_index(proxy.coord, z_min, params)
    plane = np.asarray(proxy.coord, dtype=np.float64)[list(PLANE_AXES)]
    feature = rope_rotate(proxy.feature, idx, params) + fourier_forward(params, plane)
    return EncodedProxy(feature=feature, vert_index=idx, plane=plane)


def encode_sequence(seq: ProxySequence, params: PosEncParams,
                    z_min: float | None = None) -> ProxySequence:
    """Apply encode() to every token of an assembled sequence.

    z_min defaults to the sequence's minimum vertical coordinate.
    """
    coords = seq.coords.astype(np.float64)
    if z_min is None:
        z_min = float(coords[:, VERT_AXIS].min()) if seq.k else 0.0
    if seq.k == 0:
        return seq
    idx = _vert_indices(coords, z_min, params)
    rot = rope_rotate(seq.tokens.astype(np.float64), idx, params)
    four = fourier_forward(params, coords[:, list(PLANE_AXES)])
    return ProxySequence(
        tokens=(rot + four).astype(np.float32),
        coords=seq.coords.copy(),
        group_labels=seq.group_labels.copy(),
        group_table=[GroupEntry(e.label, e.count, e.centroid.copy())
                     for e in seq.group_table],
        meta=dict(seq.meta),
    )


@dataclass
class AlignConfig:
    steps: int = 5000
    lr: float = 1e-3
    batch: int = 256
    seed: int = 0
    samples: int = 2048
    eval_samples: int = 512
    channels: int = 64
    fourier_dim: int = 64
    hidden_dim: int = 128
    box: tuple[float, float, float] = (5.0, 5.0, 3.0)
    eval_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def _r2_per_axis(pred: np.ndarray, target: np.ndarray) -> list[float]:
    ss_res = ((pred - target) ** 2).sum(axis=0)
    ss_tot = ((target - target.mean(axis=0)) ** 2).sum(axis=0)
    return (1.0 - ss_res / ss_tot).tolist()


def train_coordinate_alignment(config: AlignConfig) -> dict:
    """Fit the Fourier/MLP parameters plus a linear read-out head so 3D
    coordinates can be regressed from encoded features.

    Synthetic data: coordinates uniform in the config box, encoded over a
    fixed base feature. Optimizer is Adam on mean squared coordinate error.
    Returns the metrics record (loss curve is the full-training-set MSE per
    step, so lr=0 runs report a constant curve).
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    lo = np.zeros(3)
    hi = np.asarray(cfg.box, dtype=np.float64)
    train = rng.uniform(lo, hi, (cfg.samples, 3))
    held = rng.uniform(lo, hi, (cfg.eval_samples, 3))

    params = PosEncParams.init(cfg.channels, cfg.fourier_dim, cfg.hidden_dim,
                               seed=cfg.seed)
    base = np.ones(cfg.channels) / np.sqrt(cfg.channels)
    z_min = 0.0

    def rope_part(coords: np.ndarray) -> np.ndarray:
        idx = _vert_indices(coords, z_min, params)
        return rope_rotate(np.broadcast_to(base, (len(coords), cfg.channels)),
                           idx, params)

    rope_train = rope_part(train)
    rope_held = rope_part(held)

    theta = {
        "dirs": params.fourier_dirs, "w1": params.w1, "b1": params.b1,
        "w2": params.w2, "b2": params.b2,
        "head_w": np.zeros((3, cfg.channels)), "head_b": np.zeros(3),
    }
    m = {key: np.zeros_like(val) for key, val in theta.items()}
    v = {key: np.zeros_like(val) for key, val in theta.items()}

    def predict(coords: np.ndarray, rope_feats: np.ndarray) -> np.ndarray:
        x = rope_feats + fourier_forward(params, coords[:, list(PLANE_AXES)])
        return x @ theta["head_w"].T + theta["head_b"]

    def mse(coords, rope_feats) -> float:
        # overflow to inf is fine here, it is the divergence signal
        with np.errstate(over="ignore", invalid="ignore"):
            return float(((predict(coords, rope_feats) - coords) ** 2).mean())

    loss_curve: list[float] = []
    r2_curve: list[list[float]] = []
    r2_steps: list[int] = []

    def record_r2(step: int) -> None:
        r2_steps.append(step)
        r2_curve.append(_r2_per_axis(predict(held, rope_held), held))

    record_r2(0)
    t = 0
    for step in range(cfg.steps):
        rows = rng.integers(0, cfg.samples, cfg.batch)
        coords_b = train[rows]
        plane_b = coords_b[:, list(PLANE_AXES)]
        x = rope_train[rows] + fourier_forward(params, plane_b)
        pred = x @ theta["head_w"].T + theta["head_b"]
        err = pred - coords_b
        d_pred = 2.0 * err / err.size
        g = fourier_grad(params, plane_b, d_pred @ theta["head_w"])
        grads = {
            "dirs": g.dirs, "w1": g.w1, "b1": g.b1, "w2": g.w2, "b2": g.b2,
            "head_w": d_pred.T @ x, "head_b": d_pred.sum(axis=0),
        }
        t += 1
        c1 = 1.0 - cfg.beta1 ** t
        c2 = 1.0 - cfg.beta2 ** t
        for key, grad in grads.items():
            m[key] = cfg.beta1 * m[key] + (1.0 - cfg.beta1) * grad
            v[key] = cfg.beta2 * v[key] + (1.0 - cfg.beta2) * grad * grad
            theta[key] = theta[key] - cfg.lr * (m[key] / c1) / (
                np.sqrt(v[key] / c2) + cfg.eps)
        params.fourier_dirs = theta["dirs"]
        params.w1, params.b1 = theta["w1"], theta["b1"]
        params.w2, params.b2 = theta["w2"], theta["b2"]

        full_loss = mse(train, rope_train)
        if not np.isfinite(full_loss):
            raise DivergenceDetected(f"loss became non-finite at step {step}")
        loss_curve.append(full_loss)
        if (step + 1) % cfg.eval_every == 0:
            record_r2(step + 1)

    if not r2_steps or r2_steps[-1] != cfg.steps:
        record_r2(cfg.steps)
    return {
        "steps": cfg.steps,
        "final_train_mse": mse(train, rope_train),
        "final_eval_mse": mse(held, rope_held),
        "r2": r2_curve[-1],
        "loss_curve": loss_curve,
        "r2_curve": r2_curve,
        "r2_steps": r2_steps,
    }
