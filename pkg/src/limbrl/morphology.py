"""Agent and task descriptions.

An agent is a rooted tree of limbs (rigid bodies) connected by rotational
joints of 1 to 3 DoF. A task wraps one agent with a reward kind, target,
control timing, contact parameters, and sensor list. Task documents are
JSON files; the builtin ones ship with the package under ``tasks/``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .errors import ParseError, ValidationError

REQUIRED_TASKS = (
    "cheetah2d_run",
    "cheetah3d_run",
    "hopper2d_hop",
    "hopper3d_hop",
    "walker2d_run",
    "walker3d_run",
    "reacher_hard",
)

EPISODE_STEPS = 1000


@dataclass(frozen=True)
class LimbSpec:
    """One rigid body.

    ``joint_anchor`` is the attachment point of this limb's inbound joint,
    expressed in the parent limb's frame (for the root: its world placement
    offset). The limb frame has its origin at that anchor. ``com_offset``
    and ``contact_points`` are in the limb's own frame.
    """

    name: str
    mass: float
    inertia: np.ndarray  # 3x3 about the COM, limb frame
    com_offset: np.ndarray
    joint_anchor: np.ndarray
    contact_points: tuple = ()


@dataclass(frozen=True)
class JointSpec:
    parent: int
    child: int
    dof: int
    axes: np.ndarray  # (dof, 3) unit vectors in the parent frame
    angle_limits: tuple  # per DoF (lo, hi) or None for unlimited
    gear: np.ndarray  # per DoF, N*m of torque per unit action
    damping: np.ndarray  # per DoF, N*m*s


@dataclass(frozen=True)
class RootSpec:
    """Torso mobility: 0 (welded), 3 (planar x-slide, z-slide, y-hinge) or 6 (free)."""

    dof: int


@dataclass(frozen=True)
class SensorSpec:
    name: str
    kind: str  # "touch" | "height"
    tag: str  # "invariant" | "equivariant"
    limb: int = 0
    point: int = 0


@dataclass(eq=False)
class MorphologyTree:
    """Limbs in topological order (index 0 = root/torso) plus their joints.

    ``eq=False`` keeps identity semantics so compiled dynamics models can be
    cached per tree.
    """

    limbs: tuple
    joints: tuple
    root: RootSpec

    @property
    def n_limbs(self) -> int:
        return len(self.limbs)

    @property
    def root_dof(self) -> int:
        return self.root.dof

    @property
    def joint_dof_total(self) -> int:
        return sum(j.dof for j in self.joints)

    @property
    def action_size(self) -> int:
        return self.joint_dof_total

    @property
    def state_dof(self) -> int:
        return self.root.dof + self.joint_dof_total

    def dof_counts(self) -> dict:
        """Bookkeeping used by the registry checks: n, d1, and per-DoF joint tallies."""
        by_dof = {1: 0, 2: 0, 3: 0}
        for j in self.joints:
            by_dof[j.dof] += 1
        return {
            "n": self.n_limbs,
            "d1": self.root.dof,
            "n_1dof": by_dof[1],
            "n_2dof": by_dof[2],
            "n_3dof": by_dof[3],
            "m": self.action_size,
        }


@dataclass(eq=False)
class TaskSpec:
    name: str
    morphology: MorphologyTree
    reward_kind: str  # "run" | "hop" | "reach" | "stand"
    target_direction: Optional[np.ndarray]  # unit vector for run/hop tasks
    v_ref: float
    z_ref: float
    reach_ref: float
    episode_steps: int
    dt_control: float
    physics_substeps: int
    sensors: tuple = ()
    contact_stiffness: float = 12000.0
    contact_damping: float = 400.0
    contact_tangential: float = 300.0
    joint_limit_stiffness: float = 200.0
    joint_limit_damping: float = 2.0
    armature: float = 0.0
    init_root_height: float = 0.0
    init_angle_noise: float = 0.05
    target_radius: tuple = (0.06, 0.20)
    target_height: float = 0.1

    @property
    def tree(self) -> MorphologyTree:
        return self.morphology


def _as_vec3(x, path: str) -> np.ndarray:
    try:
        v = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(path, f"not a 3-vector: {exc}")
    if v.shape != (3,):
        raise ValidationError(path, f"expected 3 components, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(path, "non-finite component")
    return v


def _as_inertia(x, path: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape == (3,):
        arr = np.diag(arr)
    if arr.shape != (3, 3):
        raise ValidationError(path, f"expected 3 or 3x3 entries, got shape {arr.shape}")
    if np.max(np.abs(arr - arr.T)) > 1e-12:
        raise ValidationError(path, "inertia not symmetric")
    if np.min(np.linalg.eigvalsh(arr)) <= 0.0:
        raise ValidationError(path, "inertia not positive definite")
    return arr


def _parse_limb(doc: dict, idx: int) -> LimbSpec:
    path = f"limbs[{idx}]"
    if "name" not in doc or "mass" not in doc:
        raise ValidationError(path, "missing name or mass")
    mass = float(doc["mass"])
    if mass <= 0.0:
        raise ValidationError(f"{path}.mass", "mass must be positive")
    pts = tuple(
        _as_vec3(p, f"{path}.contact_points[{k}]")
        for k, p in enumerate(doc.get("contact_points", []))
    )
    return LimbSpec(
        name=str(doc["name"]),
        mass=mass,
        inertia=_as_inertia(doc.get("inertia", [1e-3, 1e-3, 1e-3]), f"{path}.inertia"),
        com_offset=_as_vec3(doc.get("com_offset", [0, 0, 0]), f"{path}.com_offset"),
        joint_anchor=_as_vec3(doc.get("joint_anchor", [0, 0, 0]), f"{path}.joint_anchor"),
        contact_points=pts,
    )


def _parse_joint(doc: dict, idx: int, n_limbs: int) -> JointSpec:
    path = f"joints[{idx}]"
    parent, child = int(doc["parent"]), int(doc["child"])
    if not (0 <= parent < n_limbs) or not (0 <= child < n_limbs):
        raise ValidationError(path, "parent/child out of range")
    if parent == child:
        raise ValidationError(path, "joint connects a limb to itself")
    if parent >= child:
        raise ValidationError(path, "limbs must be topologically ordered (parent < child)")
    axes = np.asarray(doc["axes"], dtype=float)
    if axes.ndim != 2 or axes.shape[1] != 3:
        raise ValidationError(f"{path}.axes", "expected a list of 3-vectors")
    dof = int(doc.get("dof", axes.shape[0]))
    if dof not in (1, 2, 3) or axes.shape[0] != dof:
        raise ValidationError(f"{path}.axes", f"dof must be 1..3 and match axes, got {dof}")
    gram = axes @ axes.T
    if np.max(np.abs(gram - np.eye(dof))) > 1e-9:
        raise ValidationError(f"{path}.axes", "axes must be mutually orthonormal")
    raw_limits = doc.get("angle_limits", [None] * dof)
    if len(raw_limits) != dof:
        raise ValidationError(f"{path}.angle_limits", "one (lo, hi) pair per DoF required")
    limits = []
    for k, lim in enumerate(raw_limits):
        if lim is None:
            limits.append(None)
            continue
        lo, hi = float(lim[0]), float(lim[1])
        if not lo < hi:
            raise ValidationError(f"{path}.angle_limits[{k}]", "lo must be < hi")
        limits.append((lo, hi))
    gear = np.asarray(doc.get("gear", [1.0] * dof), dtype=float)
    damping = np.asarray(doc.get("damping", [0.0] * dof), dtype=float)
    if gear.shape != (dof,) or damping.shape != (dof,):
        raise ValidationError(path, "gear/damping must have one entry per DoF")
    return JointSpec(parent, child, dof, axes, tuple(limits), gear, damping)


_SENSOR_KINDS = ("touch", "height")


def _parse_sensors(docs: list, limbs: tuple) -> tuple:
    names = [l.name for l in limbs]
    out = []
    for k, doc in enumerate(docs):
        path = f"sensors[{k}]"
        kind = doc.get("kind")
        if kind not in _SENSOR_KINDS:
            raise ValidationError(path, f"unknown sensor kind {kind!r}")
        tag = doc.get("tag", "invariant")
        if tag not in ("invariant", "equivariant"):
            raise ValidationError(path, f"unknown tag {tag!r}")
        limb_idx = 0
        if "limb" in doc:
            if doc["limb"] not in names:
                raise ValidationError(path, f"unknown limb {doc['limb']!r}")
            limb_idx = names.index(doc["limb"])
        point = int(doc.get("point", 0))
        if kind == "touch" and point >= len(limbs[limb_idx].contact_points):
            raise ValidationError(path, "touch sensor needs an existing contact point")
        out.append(SensorSpec(doc.get("name", f"{kind}{k}"), kind, tag, limb_idx, point))
    return tuple(out)


def load_morphology(document: str, name: str = "unnamed") -> TaskSpec:
    """Parse and validate a JSON task document into a TaskSpec."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    for key in ("limbs", "joints", "root", "task"):
        if key not in doc:
            raise ParseError(f"missing top-level key {key!r}")

    limbs = tuple(_parse_limb(l, i) for i, l in enumerate(doc["limbs"]))
    if not limbs:
        raise ValidationError("limbs", "at least the root limb is required")
    joints = tuple(_parse_joint(j, i, len(limbs)) for i, j in enumerate(doc["joints"]))

    root_dof = int(doc["root"].get("dof", 0))
    if root_dof not in (0, 3, 6):
        raise ValidationError("root.dof", f"must be 0, 3 or 6, got {root_dof}")

    children = [j.child for j in joints]
    if len(set(children)) != len(children):
        raise ValidationError("joints", "a limb has more than one inbound joint")
    expected = set(range(1, len(limbs)))
    if set(children) != expected:
        missing = sorted(expected - set(children))
        raise ValidationError("joints", f"tree not spanning; unconnected limbs {missing}")

    tree = MorphologyTree(limbs=limbs, joints=joints, root=RootSpec(root_dof))

    t = doc["task"]
    reward_kind = t.get("reward")
    if reward_kind not in ("run", "hop", "reach", "stand"):
        raise ValidationError("task.reward", f"unknown reward kind {reward_kind!r}")
    target = None
    if reward_kind in ("run", "hop"):
        target = _as_vec3(t.get("target_direction"), "task.target_direction")
        if abs(np.linalg.norm(target) - 1.0) > 1e-9:
            raise ValidationError("task.target_direction", "must be a unit vector")
    episode_steps = int(t.get("episode_steps", EPISODE_STEPS))
    if episode_steps != EPISODE_STEPS:
        raise ValidationError("task.episode_steps", f"must be {EPISODE_STEPS}")

    contact = t.get("contact", {})
    init = t.get("init", {})
    spec = TaskSpec(
        name=str(doc.get("name", name)),
        morphology=tree,
        reward_kind=reward_kind,
        target_direction=target,
        v_ref=float(t.get("v_ref", 1.0)),
        z_ref=float(t.get("z_ref", 1.0)),
        reach_ref=float(t.get("reach_ref", 0.25)),
        episode_steps=episode_steps,
        dt_control=float(t.get("dt_control", 0.02)),
        physics_substeps=int(t.get("substeps", 20)),
        sensors=_parse_sensors(doc.get("sensors", []), limbs),
        contact_stiffness=float(contact.get("stiffness", 12000.0)),
        contact_damping=float(contact.get("damping", 400.0)),
        contact_tangential=float(contact.get("tangential", 300.0)),
        joint_limit_stiffness=float(t.get("limit_stiffness", 200.0)),
        joint_limit_damping=float(t.get("limit_damping", 2.0)),
        armature=float(t.get("armature", 0.0)),
        init_root_height=float(init.get("root_height", 0.0)),
        init_angle_noise=float(init.get("angle_noise", 0.05)),
        target_radius=tuple(init.get("target_radius", (0.06, 0.20))),
        target_height=float(init.get("target_height", 0.1)),
    )
    if spec.dt_control <= 0 or spec.physics_substeps < 1:
        raise ValidationError("task", "dt_control and substeps must be positive")
    return spec


_REGISTRY: Optional[dict] = None


def builtin_tasks() -> dict:
    """Name -> TaskSpec for every task document shipped with the package."""
    global _REGISTRY
    if _REGISTRY is None:
        reg = {}
        root = resources.files("limbrl").joinpath("tasks")
        for entry in sorted(root.iterdir(), key=lambda e: e.name):
            if entry.name.endswith(".json"):
                spec = load_morphology(entry.read_text(), name=entry.name[:-5])
                reg[spec.name] = spec
        _REGISTRY = reg
    return _REGISTRY


def get_task(name: str) -> TaskSpec:
    reg = builtin_tasks()
    if name not in reg:
        raise KeyError(f"unknown task {name!r}; known: {', '.join(sorted(reg))}")
    return reg[name]


def _task_feature_size(spec: TaskSpec) -> int:
    return 0 if spec.target_direction is None and spec.reward_kind != "reach" else 3


def _sensor_feature_size(spec: TaskSpec) -> int:
    return sum(3 if s.tag == "equivariant" else 1 for s in spec.sensors)


def feature_dimension(spec: TaskSpec, repr_kind: str) -> int:
    """Exact length of the state vector the features module will build.

    ``limb``: 9 (torso orientation columns) + 3 (torso angular velocity)
    + 6n (per-limb position and velocity) + 3 per rotation axis of every
    multi-DoF joint, plus task and sensor features.

    ``joint``: 2 * d1 + 2 * sum of joint DoFs, plus task and sensor features.
    """
    tree = spec.morphology
    extra = _task_feature_size(spec) + _sensor_feature_size(spec)
    if repr_kind == "limb":
        axis_vecs = sum(j.dof for j in tree.joints if j.dof > 1)
        return 9 + 3 + 6 * tree.n_limbs + 3 * axis_vecs + extra
    if repr_kind == "joint":
        return 2 * tree.root_dof + 2 * tree.joint_dof_total + extra
    raise ValueError(f"unknown representation {repr_kind!r}")
