"""Identifier/semantic embedding registry, object token mapping, and the
masked autoregressive loss utility.

Real encoder embeddings of rendered identifier/semantic images are replaced
by seeded deterministic unit vectors: a counter-based splittable-mix
expansion of (seed, kind, index, lane) gives each embedding lane a uniform
real in [-1, 1), and the vector is normalized. Downstream math only needs
determinism and distinctness.

Identifier injection adds the identifier vector to every member feature of
a group before clustering, which by linearity of mean pooling shifts every
proxy feature of that group by the same vector.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .containers import ByteReader, _f32_bytes, _i32_bytes, _read_file, _u32, _write_file
from .errors import IndexOutOfRange, ParseError, ShapeMismatch
from .groups import SemanticGroup
from .patchgrid import PatchTriplet

IDENTIFIER_COUNT = 100
CATEGORY_COUNT = 213

_KIND_IDENTIFIER = 0
_KIND_SEMANTIC = 1

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

MAGIC_LOGITS = b"PXLG"

_OBJ_RE = re.compile(r"^<OBJ(\d{3})>$")


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _expand(seed: int, kind: int, index: int, lane: int) -> float:
    """Uniform real in [-1, 1) from the (seed, kind, index, lane) counter."""
    state = seed & _MASK
    for word in (kind, index, lane):
        state = _mix64((state + _GOLDEN + word) & _MASK)
    return 2.0 * ((state >> 11) * 2.0 ** -53) - 1.0


@dataclass(frozen=True)
class EmbeddingRegistry:
    """Deterministic unit-vector embeddings for object identifiers (0..99)
    and object categories (0..212)."""

    seed: int
    channels: int
    identifier_count: int = IDENTIFIER_COUNT
    category_count: int = CATEGORY_COUNT

    def _vector(self, kind: int, index: int) -> np.ndarray:
        raw = np.array([_expand(self.seed, kind, index, lane)
                        for lane in range(self.channels)])
        return raw / np.linalg.norm(raw)

    def identifier_embedding(self, identifier: int) -> np.ndarray:
        if not 0 <= identifier < self.identifier_count:
            raise IndexOutOfRange(
                f"identifier {identifier} outside [0, {self.identifier_count})")
        return self._vector(_KIND_IDENTIFIER, identifier)

    def semantic_embedding(self, category: int) -> np.ndarray:
        if not 0 <= category < self.category_count:
            raise IndexOutOfRange(
                f"category {category} outside [0, {self.category_count})")
        return self._vector(_KIND_SEMANTIC, category)


def fuse(semantic: np.ndarray, identifier: np.ndarray) -> np.ndarray:
    """Additive fusion of a semantic and an identifier embedding."""
    a = np.asarray(semantic, dtype=np.float64)
    b = np.asarray(identifier, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    return a + b


def add_feature_offset(group: SemanticGroup, offset: np.ndarray) -> SemanticGroup:
    """Group with `offset` added to every member feature; geometry untouched."""
    off = np.asarray(offset, dtype=np.float64)
    members = [
        PatchTriplet(feature=t.feature + off, point=t.point, label=t.label,
                     frame_index=t.frame_index, patch_row=t.patch_row,
                     patch_col=t.patch_col, global_index=t.global_index)
        for t in group.members
    ]
    return SemanticGroup(group.label, members, group.allocated)


def inject_identifier(group: SemanticGroup, identifier: int,
                      registry: EmbeddingRegistry) -> SemanticGroup:
    """Mark a group for referencing by fusing the identifier embedding into
    every member feature (done before clustering)."""
    return add_feature_offset(group, registry.identifier_embedding(identifier))


def object_token(identifier: int) -> str:
    if not 0 <= identifier < IDENTIFIER_COUNT:
        raise IndexOutOfRange(
            f"identifier {identifier} outside [0, {IDENTIFIER_COUNT})")
    return f"<OBJ{identifier:03d}>"


def parse_object_token(text: str) -> int:
    m = _OBJ_RE.match(text)
    if not m:
        raise ParseError(f"not an object token: {text!r}")
    identifier = int(m.group(1))
    if identifier >= IDENTIFIER_COUNT:
        raise ParseError(f"identifier {identifier} out of range in {text!r}")
    return identifier


@dataclass
class LossInput:
    """Logits over the full sequence plus target ids; the first prefix_len
    positions condition the response and contribute no loss."""

    logits: np.ndarray   # (r_total, V)
    targets: np.ndarray  # (r_total,)
    prefix_len: int

    def validate(self) -> None:
        logits = np.asarray(self.logits)
        targets = np.asarray(self.targets)
        if logits.ndim != 2:
            raise ShapeMismatch(f"logits must be 2-dimensional, got {logits.ndim}")
        r_total, vocab = logits.shape
        if targets.shape != (r_total,):
            raise ShapeMismatch(
                f"targets shape {targets.shape} != {(r_total,)}")
        if not 0 <= self.prefix_len < r_total:
            raise ShapeMismatch(
                f"prefix_len {self.prefix_len} outside [0, {r_total})")
        if targets.size and (targets.min() < 0 or targets.max() >= vocab):
            raise ShapeMismatch(f"targets must lie in [0, {vocab})")


def nll_loss(loss_input: LossInput) -> float:
    """Negative log-likelihood of the response tokens, natural log,
    log-sum-exp stabilized, float64."""
    loss_input.validate()
    logits = np.asarray(loss_input.logits, dtype=np.float64)
    targets = np.asarray(loss_input.targets, dtype=np.int64)
    rows = logits[loss_input.prefix_len:]
    tgts = targets[loss_input.prefix_len:]
    peak = rows.max(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(np.exp(rows - peak).sum(axis=1))
    picked = rows[np.arange(len(rows)), tgts]
    return float((lse - picked).sum())


def write_logits(loss_input: LossInput, path) -> None:
    """PXLG container: magic, V u32, r_total u32, prefix u32, then logits
    (r_total*V f32) and targets (r_total i32), little-endian."""
    loss_input.validate()
    r_total, vocab = np.asarray(loss_input.logits).shape
    out = bytearray()
    out += MAGIC_LOGITS
    out += _u32(vocab)
    out += _u32(r_total)
    out += _u32(loss_input.prefix_len)
    out += _f32_bytes(np.asarray(loss_input.logits, dtype=np.float32))
    out += _i32_bytes(np.asarray(loss_input.targets, dtype=np.int32))
    _write_file(path, bytes(out))


def read_logits(path) -> LossInput:
    r = ByteReader(_read_file(path))
    r.magic(MAGIC_LOGITS)
    vocab = r.u32()
    r_total = r.u32()
    prefix = r.u32()
    logits = r.f32_array(r_total * vocab, (r_total, vocab))
    targets = r.i32_array(r_total, (r_total,))
    loss_input = LossInput(logits, targets, prefix)
    loss_input.validate()
    return loss_input
