"""Replay-batch transformations.

``euclidean`` rotates stored states about the gravity axis using only the
feature layout's tags: 3-vector slices rotate, heading slices shift, scalar
slices stay put; actions and rewards are untouched because the underlying
dynamics and reward are symmetric under the same rotation. The same
slice-wise rule applied to the joint-based layout (``joint_euclidean``)
touches only the root block and task vectors, which is the ablation arm.

``gaussian_noise`` and ``ras`` are the perturbation baselines: additive
N(0, sigma^2) noise and elementwise Uniform[lo, hi] amplitude scaling of
the state vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LayoutMismatch
from .features import EQUIVARIANT3, YAW, FeatureLayout, StateVector

AUGMENT_KINDS = ("none", "euclidean", "gaussian_noise", "ras", "joint_euclidean")


@dataclass
class Transition:
    """One n-step replay item: s, a, discounted reward sum, s_{t+n}, gamma^n.

    ``discount`` is 0 when the episode terminated inside the n-step window.
    """

    s: StateVector
    a: np.ndarray
    r_cum: float
    s_next: StateVector
    discount: float


@dataclass
class TransitionBatch:
    """Stacked transitions sharing one layout."""

    s: np.ndarray  # (B, dim)
    a: np.ndarray  # (B, m)
    r: np.ndarray  # (B,)
    s_next: np.ndarray  # (B, dim)
    discount: np.ndarray  # (B,)
    layout: FeatureLayout

    @property
    def size(self) -> int:
        return self.s.shape[0]

    def copy(self) -> "TransitionBatch":
        return TransitionBatch(self.s.copy(), self.a.copy(), self.r.copy(),
                               self.s_next.copy(), self.discount.copy(), self.layout)

    @staticmethod
    def from_transitions(items) -> "TransitionBatch":
        layout = items[0].s.layout
        return TransitionBatch(
            np.stack([t.s.values for t in items]),
            np.stack([t.a for t in items]),
            np.array([t.r_cum for t in items]),
            np.stack([t.s_next.values for t in items]),
            np.array([t.discount for t in items]),
            layout,
        )


@dataclass
class AugmentConfig:
    kind: str = "none"
    rho_aug: float = 0.5  # fraction of each batch transformed
    gn_sigma: float = 1.0
    ras_lo: float = 0.5
    ras_hi: float = 1.0
    # Perturbation baselines draw independently for s and s_next by default.
    tie_next_draw: bool = False

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.rho_aug <= 1.0:
            raise ValueError("rho_aug must be in [0, 1]")
        if self.ras_lo > self.ras_hi:
            raise ValueError("ras_lo must be <= ras_hi")


# ------------------------------------------------------------- rotation


def rotate_state_features(sv: StateVector, alpha: float) -> StateVector:
    """Rotate one stored state by ``alpha`` using only its layout tags."""
    out = sv.values.copy()
    _rotate_rows(out[None, :], sv.layout, np.array([alpha]))
    return StateVector(out, sv.layout)


def _rotate_rows(values: np.ndarray, layout: FeatureLayout, alphas: np.ndarray) -> None:
    """In-place slice-wise rotation, one angle per row of ``values``."""
    c, s = np.cos(alphas), np.sin(alphas)
    for sl in layout:
        o = sl.offset
        if sl.tag == EQUIVARIANT3:
            x = values[:, o].copy()
            y = values[:, o + 1].copy()
            values[:, o] = c * x - s * y
            values[:, o + 1] = s * x + c * y
        elif sl.tag == YAW:
            a = values[:, o] + alphas
            values[:, o] = (a + np.pi) % (2.0 * np.pi) - np.pi


def joint_euclidean_rotate(sv: StateVector, alpha: float) -> StateVector:
    """Rotation applied to the joint-based layout: hinge content is untouched."""
    if sv.layout.repr_kind != "joint":
        raise LayoutMismatch("joint_euclidean requires the joint-based layout")
    return rotate_state_features(sv, alpha)


# ---------------------------------------------------------------- batch


def augment_batch(batch: TransitionBatch, cfg: AugmentConfig,
                  rng: np.random.Generator) -> TransitionBatch:
    """Transform round(rho_aug * B) uniformly chosen transitions.

    Rotations use a fresh angle per selected transition, identical for s and
    s_next so the pair stays one valid trajectory segment; actions, rewards
    and discounts are returned bit-for-bit unchanged.
    """
    if cfg.kind == "none":
        return batch
    if cfg.kind == "euclidean" and batch.layout.repr_kind != "limb":
        raise LayoutMismatch("euclidean augmentation requires the limb-based layout")
    if cfg.kind == "joint_euclidean" and batch.layout.repr_kind != "joint":
        raise LayoutMismatch("joint_euclidean augmentation requires the joint-based layout")

    B = batch.size
    n_aug = int(round(cfg.rho_aug * B))
    out = batch.copy()
    if n_aug == 0:
        return out
    rows = rng.choice(B, size=n_aug, replace=False)

    dim = batch.layout.dim
    # fancy indexing yields copies; transform the copies, then write back
    s_rows = out.s[rows]
    sn_rows = out.s_next[rows]
    if cfg.kind in ("euclidean", "joint_euclidean"):
        alphas = rng.uniform(0.0, 2.0 * math.pi, n_aug)
        _rotate_rows(s_rows, batch.layout, alphas)
        _rotate_rows(sn_rows, batch.layout, alphas)
    elif cfg.kind == "gaussian_noise":
        z = rng.normal(0.0, cfg.gn_sigma, (n_aug, dim))
        s_rows += z
        sn_rows += z if cfg.tie_next_draw else rng.normal(0.0, cfg.gn_sigma, (n_aug, dim))
    elif cfg.kind == "ras":
        z = rng.uniform(cfg.ras_lo, cfg.ras_hi, (n_aug, dim))
        s_rows *= z
        sn_rows *= z if cfg.tie_next_draw else rng.uniform(cfg.ras_lo, cfg.ras_hi, (n_aug, dim))
    out.s[rows] = s_rows
    out.s_next[rows] = sn_rows
    return out
