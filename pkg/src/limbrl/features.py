"""State vectors with a machine-readable transformation schema.

Every feature slice carries a tag describing how it behaves when the
physical scene is rotated about the gravity axis:

* ``Equivariant3``: a world-frame 3-vector; rotates as R @ x.
* ``InvariantScalar``: unchanged (joint angles, rates, touch, height).
* ``YawAngle``: a heading angle; shifts by the rotation angle (wrapped).

The tags alone are enough to transform a stored state. Their correctness is
the load-bearing property of the whole toolkit and is checked against the
simulator by the audit module.

Two representations are built from the same underlying state:

* limb-based: torso orientation columns and angular velocity, egocentric
  limb positions, limb velocities, world rotation axes of every multi-DoF
  joint, then task and sensor blocks. Rich in equivariant content.
* joint-based: generalized coordinates and rates, then the same task and
  sensor blocks. Mostly invariant content; only the root block reacts to
  rotations.
"""

from __future__ import annotations

import json
import weakref
from dataclasses import dataclass

import numpy as np

from .dynamics import LimbKinematics, GeneralizedState, Simulator, forward_kinematics
from .morphology import TaskSpec, feature_dimension
from .spatial import wrap_angle

EQUIVARIANT3 = "Equivariant3"
INVARIANT = "InvariantScalar"
YAW = "YawAngle"
_TAGS = (EQUIVARIANT3, INVARIANT, YAW)


@dataclass(frozen=True)
class Slice:
    name: str
    offset: int
    length: int
    tag: str


class FeatureLayout:
    """Ordered, contiguous slices covering [0, dim)."""

    def __init__(self, slices, repr_kind: str):
        self.slices = tuple(slices)
        self.repr_kind = repr_kind
        off = 0
        for s in self.slices:
            if s.tag not in _TAGS:
                raise ValueError(f"slice {s.name}: unknown tag {s.tag}")
            if s.offset != off:
                raise ValueError(f"slice {s.name}: gap or overlap at {s.offset}")
            if s.tag == EQUIVARIANT3 and s.length != 3:
                raise ValueError(f"slice {s.name}: Equivariant3 must have length 3")
            if s.tag == YAW and s.length != 1:
                raise ValueError(f"slice {s.name}: YawAngle must have length 1")
            off += s.length
        self.dim = off

    def __iter__(self):
        return iter(self.slices)

    def __getitem__(self, name: str) -> Slice:
        for s in self.slices:
            if s.name == name:
                return s
        raise KeyError(name)

    def with_tag(self, name: str, tag: str) -> "FeatureLayout":
        """Copy with one slice re-tagged (test fixture for negative controls)."""
        return FeatureLayout(
            [Slice(s.name, s.offset, s.length, tag if s.name == name else s.tag)
             for s in self.slices],
            self.repr_kind,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "repr_kind": self.repr_kind,
                "slices": [
                    {"name": s.name, "offset": s.offset, "length": s.length, "tag": s.tag}
                    for s in self.slices
                ],
            },
            indent=1,
        )

    @staticmethod
    def from_json(text: str) -> "FeatureLayout":
        doc = json.loads(text)
        return FeatureLayout(
            [Slice(s["name"], s["offset"], s["length"], s["tag"]) for s in doc["slices"]],
            doc["repr_kind"],
        )


@dataclass
class StateVector:
    values: np.ndarray
    layout: FeatureLayout

    def copy(self) -> "StateVector":
        return StateVector(self.values.copy(), self.layout)


# ------------------------------------------------------------- layouts


def _task_slices(task: TaskSpec, off: int):
    out = []
    if task.target_direction is not None or task.reward_kind == "reach":
        out.append(Slice("target", off, 3, EQUIVARIANT3))
        off += 3
    for s in task.sensors:
        if s.tag == "equivariant":
            out.append(Slice(s.name, off, 3, EQUIVARIANT3))
            off += 3
        else:
            out.append(Slice(s.name, off, 1, INVARIANT))
            off += 1
    return out, off


_LIMB_LAYOUTS: "weakref.WeakKeyDictionary[TaskSpec, FeatureLayout]" = weakref.WeakKeyDictionary()
_JOINT_LAYOUTS: "weakref.WeakKeyDictionary[TaskSpec, FeatureLayout]" = weakref.WeakKeyDictionary()

# Whether the joint representation treats the free root's world linear
# velocity as a rotating vector. It is one, so the default is True; False
# freezes those components under augmentation for ablation studies.
JOINT_ROOT_VELOCITY_ROTATES = True


def limb_layout(task: TaskSpec) -> FeatureLayout:
    layout = _LIMB_LAYOUTS.get(task)
    if layout is not None:
        return layout
    tree = task.morphology
    s, off = [], 0

    def add(name, length, tag):
        nonlocal off
        s.append(Slice(name, off, length, tag))
        off += length

    for k in range(3):
        add(f"root_rot_col{k}", 3, EQUIVARIANT3)
    add("root_omega", 3, EQUIVARIANT3)
    for i, limb in enumerate(tree.limbs):
        add(f"p_{limb.name}", 3, EQUIVARIANT3)
        add(f"v_{limb.name}", 3, EQUIVARIANT3)
    for j in tree.joints:
        if j.dof > 1:
            child = tree.limbs[j.child].name
            for k in range(j.dof):
                add(f"axis_{child}_{k}", 3, EQUIVARIANT3)
    ts, off = _task_slices(task, off)
    s.extend(ts)
    layout = FeatureLayout(s, "limb")
    assert layout.dim == feature_dimension(task, "limb")
    _LIMB_LAYOUTS[task] = layout
    return layout


def joint_layout(task: TaskSpec) -> FeatureLayout:
    layout = _JOINT_LAYOUTS.get(task)
    if layout is not None:
        return layout
    tree = task.morphology
    d1 = tree.root_dof
    s, off = [], 0

    def add(name, length, tag):
        nonlocal off
        s.append(Slice(name, off, length, tag))
        off += length

    if d1 == 6:
        add("root_pos", 3, EQUIVARIANT3)
        add("root_yaw", 1, YAW)
        add("root_pitch_roll", 2, INVARIANT)
    elif d1 == 3:
        add("root_q", 3, INVARIANT)
    if tree.joint_dof_total:
        add("joint_angles", tree.joint_dof_total, INVARIANT)
    if d1 == 6:
        vel_tag = EQUIVARIANT3 if JOINT_ROOT_VELOCITY_ROTATES else INVARIANT
        add("root_vel", 3, vel_tag)
        add("root_euler_rates", 3, INVARIANT)
    elif d1 == 3:
        add("root_qd", 3, INVARIANT)
    if tree.joint_dof_total:
        add("joint_rates", tree.joint_dof_total, INVARIANT)
    ts, off = _task_slices(task, off)
    s.extend(ts)
    layout = FeatureLayout(s, "joint")
    assert layout.dim == feature_dimension(task, "joint")
    _JOINT_LAYOUTS[task] = layout
    return layout


def layout_for(task: TaskSpec, repr_kind: str) -> FeatureLayout:
    if repr_kind == "limb":
        return limb_layout(task)
    if repr_kind == "joint":
        return joint_layout(task)
    raise ValueError(f"unknown representation {repr_kind!r}")


# ------------------------------------------------------------- builders


_SIMS: "weakref.WeakKeyDictionary[TaskSpec, Simulator]" = weakref.WeakKeyDictionary()


def _sim(task: TaskSpec) -> Simulator:
    sim = _SIMS.get(task)
    if sim is None:
        sim = Simulator(task)
        _SIMS[task] = sim
    return sim


def _target_feature(task: TaskSpec, kin: LimbKinematics,
                    target: np.ndarray | None) -> np.ndarray | None:
    if task.reward_kind == "reach":
        if target is None:
            raise ValueError("reach tasks need the current target point")
        ee = kin.p[-1] + kin.R[-1] @ _sim(task)._ee_local()
        return target - ee
    if task.target_direction is None:
        return None
    return task.target_direction if target is None else target


def build_limb_state(task: TaskSpec, gs: GeneralizedState,
                     kin: LimbKinematics | None = None,
                     target: np.ndarray | None = None) -> StateVector:
    """Limb-based state: world-frame geometry, egocentric positions.

    ``kin`` may be passed when the caller already ran forward kinematics.
    """
    tree = task.morphology
    if kin is None:
        kin = forward_kinematics(tree, gs)
    layout = limb_layout(task)
    out = np.empty(layout.dim)
    off = 0
    for k in range(3):
        out[off:off + 3] = kin.R[0][:, k]
        off += 3
    out[off:off + 3] = kin.omega[0]
    off += 3
    p0 = kin.p[0]
    for i in range(tree.n_limbs):
        out[off:off + 3] = kin.p[i] - p0
        out[off + 3:off + 6] = kin.v[i]
        off += 6
    for ji, j in enumerate(tree.joints):
        if j.dof > 1:
            axes = kin.joint_axes[ji]
            for k in range(j.dof):
                out[off:off + 3] = axes[k]
                off += 3
    off = _fill_task_block(task, gs, kin, target, out, off)
    assert off == layout.dim
    return StateVector(out, layout)


def build_joint_state(task: TaskSpec, gs: GeneralizedState,
                      kin: LimbKinematics | None = None,
                      target: np.ndarray | None = None) -> StateVector:
    """Joint-based state: coordinates and rates, horizontal position zeroed."""
    tree = task.morphology
    d1 = tree.root_dof
    layout = joint_layout(task)
    out = np.empty(layout.dim)
    off = 0
    if d1 == 6:
        out[off:off + 2] = 0.0  # egocentric: horizontal position unobserved
        out[off + 2] = gs.q[2]
        out[off + 3] = wrap_angle(gs.q[3])
        out[off + 4] = gs.q[4]
        out[off + 5] = gs.q[5]
        off += 6
    elif d1 == 3:
        out[off] = 0.0  # egocentric: in-plane position unobserved
        out[off + 1] = gs.q[1]
        out[off + 2] = gs.q[2]
        off += 3
    m = tree.joint_dof_total
    if m:
        out[off:off + m] = gs.q[d1:]
        off += m
    if d1:
        out[off:off + d1] = gs.qdot[0:d1]
        off += d1
    if m:
        out[off:off + m] = gs.qdot[d1:]
        off += m
    if kin is None and (task.reward_kind == "reach" or task.sensors
                        or task.target_direction is not None):
        kin = forward_kinematics(tree, gs)
    off = _fill_task_block(task, gs, kin, target, out, off)
    assert off == layout.dim
    return StateVector(out, layout)


def _fill_task_block(task, gs, kin, target, out, off) -> int:
    tvec = _target_feature(task, kin, target)
    if tvec is not None:
        out[off:off + 3] = tvec
        off += 3
    if task.sensors:
        vals = _sim(task).sensors_at(gs)
        out[off:off + len(vals)] = vals
        off += len(vals)
    return off


def build_state(task: TaskSpec, repr_kind: str, gs: GeneralizedState,
                kin: LimbKinematics | None = None,
                target: np.ndarray | None = None) -> StateVector:
    if repr_kind == "limb":
        return build_limb_state(task, gs, kin, target)
    if repr_kind == "joint":
        return build_joint_state(task, gs, kin, target)
    raise ValueError(f"unknown representation {repr_kind!r}")
