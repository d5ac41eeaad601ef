"""Equivariance audits: the toolkit's primary regression gates.

Three residuals, each driven by random states and rotation angles:

* step equivariance: simulating a rotated state matches rotating the
  simulated state, coordinate by coordinate, with contact active; rewards
  match when the task target co-rotates.
* schema soundness: rotating a built state vector through its layout tags
  matches building the state vector of the rotated physical state. This
  validates the transformation tags without trusting simulator internals.
* augmentation consistency: a feature-level rotated transition
  (s, a, s_next) is exactly what re-simulating from the rotated physical
  state produces, i.e. augmented transitions are real dynamics samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import rotate_state_features
from .dynamics import (
    GeneralizedState,
    Simulator,
    rotate_internal,
    sample_target,
)
from .features import YAW, FeatureLayout, build_state
from .morphology import TaskSpec, get_task
from .spatial import wrap_angle, yaw_rotation

PASS_THRESHOLD = 1e-6


def _stable_hash(text: str) -> int:
    import zlib

    return zlib.crc32(text.encode())


def random_state(task: TaskSpec, rng: np.random.Generator) -> GeneralizedState:
    """A bounded random state: near the ground (some contact, some airborne),
    pitch away from the Euler singularity, joint angles inside their limits."""
    tree = task.morphology
    d1, m, d = tree.root_dof, tree.joint_dof_total, tree.state_dof
    q = np.zeros(d)
    qd = np.zeros(d)
    frame_yaw = 0.0
    if d1 == 6:
        q[0:2] = rng.uniform(-0.5, 0.5, 2)
        q[2] = task.init_root_height + rng.uniform(-0.15, 0.3)
        q[3] = rng.uniform(-np.pi, np.pi)
        q[4:6] = rng.uniform(-0.9, 0.9, 2)
        qd[0:3] = rng.uniform(-1.5, 1.5, 3)
        qd[3:6] = rng.uniform(-1.5, 1.5, 3)
    elif d1 == 3:
        q[0] = rng.uniform(-0.5, 0.5)
        q[1] = task.init_root_height + rng.uniform(-0.15, 0.3)
        q[2] = rng.uniform(-1.0, 1.0)
        qd[0:3] = rng.uniform(-1.5, 1.5, 3)
        frame_yaw = rng.uniform(-np.pi, np.pi)
    else:
        frame_yaw = rng.uniform(-np.pi, np.pi)
    off = d1
    for j in tree.joints:
        for k in range(j.dof):
            lim = j.angle_limits[k]
            lo = -np.pi if lim is None else max(lim[0], -np.pi)
            hi = np.pi if lim is None else min(lim[1], np.pi)
            q[off] = rng.uniform(lo, hi)
            qd[off] = rng.uniform(-2.0, 2.0)
            off += 1
    return GeneralizedState(q, qd, frame_yaw)


def _state_diff(tree, a: GeneralizedState, b: GeneralizedState) -> float:
    dq = np.abs(a.q - b.q)
    if tree.root_dof == 6:
        dq[3] = abs(wrap_angle(a.q[3] - b.q[3]))
    dfy = abs(wrap_angle(a.frame_yaw - b.frame_yaw))
    return max(dq.max(), np.abs(a.qdot - b.qdot).max(), dfy)


def _feature_diff(layout: FeatureLayout, a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    for sl in layout:
        if sl.tag == YAW:
            diff[sl.offset] = wrap_angle(diff[sl.offset])
    return float(np.abs(diff).max())


def _rotated_target(task, target, alpha):
    if target is None:
        return None
    return yaw_rotation(alpha) @ target


def audit_step_equivariance(task: TaskSpec, samples: int,
                            rng: np.random.Generator) -> float:
    """max over samples of | step(rotate(s)) - rotate(step(s)) | and reward gap."""
    sim = Simulator(task)
    tree = task.morphology
    worst = 0.0
    for _ in range(samples):
        gs = random_state(task, rng)
        a = rng.uniform(-1.0, 1.0, tree.action_size)
        alpha = rng.uniform(0.0, 2.0 * np.pi)
        target = sample_target(task, rng)
        res = sim.step(gs, a, target=target)
        res_rot = sim.step(rotate_internal(tree, gs, alpha), a,
                           target=_rotated_target(task, target, alpha))
        expected = rotate_internal(tree, res.gs, alpha)
        worst = max(worst, _state_diff(tree, res_rot.gs, expected),
                    abs(res_rot.reward - res.reward))
        if res.sensors.size:
            worst = max(worst, float(np.abs(res_rot.sensors - res.sensors).max()))
    return worst


def audit_schema(task: TaskSpec, repr_kind: str, samples: int,
                 rng: np.random.Generator,
                 layout_override: FeatureLayout | None = None) -> float:
    """max over samples of | build(rotate(s)) - tag_rotate(build(s)) |.

    ``layout_override`` lets tests check that a wrong layout fails.
    """
    tree = task.morphology
    worst = 0.0
    for _ in range(samples):
        gs = random_state(task, rng)
        target = sample_target(task, rng)
        alpha = rng.uniform(0.3, 2.0 * np.pi - 0.3)
        sv = build_state(task, repr_kind, gs, target=target)
        if layout_override is not None:
            sv = type(sv)(sv.values, layout_override)
        sv_feat = rotate_state_features(sv, alpha)
        sv_phys = build_state(task, repr_kind, rotate_internal(tree, gs, alpha),
                              target=_rotated_target(task, target, alpha))
        worst = max(worst, _feature_diff(sv_phys.layout, sv_feat.values, sv_phys.values))
    return worst


def audit_augment_consistency(task: TaskSpec, repr_kind: str, samples: int,
                              rng: np.random.Generator) -> float:
    """Feature-rotated transitions equal re-simulated rotated transitions."""
    sim = Simulator(task)
    tree = task.morphology
    worst = 0.0
    for _ in range(samples):
        gs = random_state(task, rng)
        target = sample_target(task, rng)
        a = rng.uniform(-1.0, 1.0, tree.action_size)
        alpha = rng.uniform(0.0, 2.0 * np.pi)

        res = sim.step(gs, a, target=target)
        s0 = build_state(task, repr_kind, gs, target=target)
        s1 = build_state(task, repr_kind, res.gs, target=target)
        s0_aug = rotate_state_features(s0, alpha)
        s1_aug = rotate_state_features(s1, alpha)

        gs_rot = rotate_internal(tree, gs, alpha)
        t_rot = _rotated_target(task, target, alpha)
        res_rot = sim.step(gs_rot, a, target=t_rot)
        s0_re = build_state(task, repr_kind, gs_rot, target=t_rot)
        s1_re = build_state(task, repr_kind, res_rot.gs, target=t_rot)

        worst = max(
            worst,
            _feature_diff(s0.layout, s0_aug.values, s0_re.values),
            _feature_diff(s1.layout, s1_aug.values, s1_re.values),
            abs(res_rot.reward - res.reward),
        )
    return worst


@dataclass
class AuditReport:
    task: str
    repr_kind: str
    step_residual: float
    schema_residual: float
    augment_residual: float

    @property
    def passed(self) -> bool:
        return max(self.step_residual, self.schema_residual,
                   self.augment_residual) < PASS_THRESHOLD

    def lines(self):
        mark = "PASS" if self.passed else "FAIL"
        yield (f"[{mark}] {self.task} ({self.repr_kind}): "
               f"step {self.step_residual:.3e}  "
               f"schema {self.schema_residual:.3e}  "
               f"augment {self.augment_residual:.3e}")


def run_audit(task_name: str, repr_kind: str = "limb", samples: int = 1000,
              seed: int = 0) -> AuditReport:
    task = get_task(task_name)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _stable_hash(task_name)]))
    return AuditReport(
        task=task_name,
        repr_kind=repr_kind,
        step_residual=audit_step_equivariance(task, samples, rng),
        schema_residual=audit_schema(task, repr_kind, samples, rng),
        augment_residual=audit_augment_consistency(task, repr_kind, samples, rng),
    )
