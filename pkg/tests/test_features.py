import numpy as np
import pytest

from limbrl.audit import audit_schema, random_state
from limbrl.dynamics import forward_kinematics, rotate_internal, sample_target
from limbrl.features import (
    EQUIVARIANT3,
    INVARIANT,
    YAW,
    FeatureLayout,
    Slice,
    StateVector,
    build_joint_state,
    build_limb_state,
    build_state,
    joint_layout,
    limb_layout,
)
from limbrl.morphology import builtin_tasks, feature_dimension, get_task

RNG = np.random.default_rng(5)
ALL_TASKS = sorted(builtin_tasks())


def test_layout_validation():
    with pytest.raises(ValueError, match="gap"):
        FeatureLayout([Slice("a", 0, 3, EQUIVARIANT3), Slice("b", 4, 1, INVARIANT)], "limb")
    with pytest.raises(ValueError, match="length 3"):
        FeatureLayout([Slice("a", 0, 2, EQUIVARIANT3)], "limb")
    with pytest.raises(ValueError, match="length 1"):
        FeatureLayout([Slice("a", 0, 2, YAW)], "joint")
    with pytest.raises(ValueError, match="unknown tag"):
        FeatureLayout([Slice("a", 0, 1, "Wiggly")], "limb")


def test_layout_json_round_trip():
    layout = limb_layout(get_task("hopper3d_hop"))
    back = FeatureLayout.from_json(layout.to_json())
    assert back.dim == layout.dim
    assert back.repr_kind == layout.repr_kind
    assert all(a == b for a, b in zip(back.slices, layout.slices))


@pytest.mark.parametrize("name", ALL_TASKS)
@pytest.mark.parametrize("repr_kind", ["limb", "joint"])
def test_dimensions_match_morphology(name, repr_kind):
    task = get_task(name)
    layout = limb_layout(task) if repr_kind == "limb" else joint_layout(task)
    assert layout.dim == feature_dimension(task, repr_kind)
    gs = random_state(task, RNG)
    sv = build_state(task, repr_kind, gs, target=sample_target(task, RNG))
    assert sv.values.shape == (layout.dim,)
    assert np.all(np.isfinite(sv.values))


def test_cheetah_limb_layout_structure():
    task = get_task("cheetah2d_run")
    layout = limb_layout(task)
    names = [s.name for s in layout]
    assert sum(n.startswith("root_rot_col") for n in names) == 3
    assert names.count("root_omega") == 1
    assert sum(n.startswith("p_") for n in names) == 7
    assert sum(n.startswith("v_") for n in names) == 7
    assert sum(n.startswith("axis_") for n in names) == 0  # all joints 1-DoF
    assert names.count("target") == 1


def test_hopper3d_axis_slices():
    task = get_task("hopper3d_hop")
    layout = limb_layout(task)
    axis_slices = [s for s in layout if s.name.startswith("axis_")]
    assert len(axis_slices) == 12  # 4 joints x 3 axes
    assert all(s.tag == EQUIVARIANT3 for s in axis_slices)


def test_root_position_slice_is_zero():
    for name in ALL_TASKS:
        task = get_task(name)
        gs = random_state(task, RNG)
        sv = build_limb_state(task, gs, target=sample_target(task, RNG))
        root_name = f"p_{task.morphology.limbs[0].name}"
        sl = sv.layout[root_name]
        assert np.all(sv.values[sl.offset:sl.offset + 3] == 0.0)


def test_joint_layout_tags():
    task = get_task("hopper3d_hop")
    layout = joint_layout(task)
    assert layout["root_yaw"].tag == YAW
    assert layout["root_pitch_roll"].tag == INVARIANT
    assert layout["joint_angles"].tag == INVARIANT
    assert layout["joint_rates"].tag == INVARIANT
    assert layout["root_vel"].tag == EQUIVARIANT3
    assert layout["root_euler_rates"].tag == INVARIANT

    planar = joint_layout(get_task("cheetah2d_run"))
    assert planar["root_q"].tag == INVARIANT
    assert planar["root_qd"].tag == INVARIANT


def test_cheetah_joint_root_block_observed():
    # planar root observed with the in-plane position zeroed: (0, z, pitch)
    task = get_task("cheetah2d_run")
    gs = random_state(task, RNG)
    sv = build_joint_state(task, gs)
    sl = sv.layout["root_q"]
    block = sv.values[sl.offset:sl.offset + 3]
    assert block[0] == 0.0
    assert block[1] == gs.q[1]
    assert block[2] == gs.q[2]


def test_egocentric_translation_invariance():
    # shifting the scene horizontally leaves the limb state unchanged
    for name in ("hopper3d_hop", "walker3d_run", "cheetah3d_run"):
        task = get_task(name)
        gs = random_state(task, RNG)
        target = sample_target(task, RNG)
        s0 = build_limb_state(task, gs, target=target)
        gs2 = gs.copy()
        gs2.q[0] += 3.7
        gs2.q[1] -= 1.9
        s1 = build_limb_state(task, gs2, target=target)
        assert np.max(np.abs(s0.values - s1.values)) < 1e-12


@pytest.mark.parametrize("name", ALL_TASKS)
@pytest.mark.parametrize("repr_kind", ["limb", "joint"])
def test_schema_soundness(name, repr_kind):
    # keystone: layout tags alone reproduce the physical rotation
    task = get_task(name)
    rng = np.random.default_rng(77)
    assert audit_schema(task, repr_kind, 60, rng) < 1e-9


def test_mistagged_layout_fails_schema():
    # negative control: breaking one tag must break the audit
    task = get_task("hopper3d_hop")
    rng = np.random.default_rng(78)
    bad = limb_layout(task).with_tag("v_torso", INVARIANT)
    assert audit_schema(task, "limb", 40, rng, layout_override=bad) > 1e-3


def test_joint_and_limb_states_describe_same_physics():
    # reconstruct the generalized state from the joint features and check the
    # limb features match: the two representations are informationally
    # equivalent up to the egocentric translation
    import limbrl.dynamics as dyn

    for name in ("hopper3d_hop", "cheetah2d_run", "reacher_hard"):
        task = get_task(name)
        tree = task.morphology
        d1 = tree.root_dof
        gs = random_state(task, RNG)
        gs.frame_yaw = 0.0
        target = sample_target(task, RNG)
        sv_joint = build_joint_state(task, gs, target=target)

        q = np.zeros(tree.state_dof)
        qd = np.zeros(tree.state_dof)
        vals, layout = sv_joint.values, sv_joint.layout
        if d1 == 6:
            sl = layout["root_pos"]
            q[0:3] = vals[sl.offset:sl.offset + 3]  # x, y lost to egocentrism
            q[3] = vals[layout["root_yaw"].offset]
            pr = layout["root_pitch_roll"].offset
            q[4], q[5] = vals[pr], vals[pr + 1]
            sl = layout["root_vel"]
            qd[0:3] = vals[sl.offset:sl.offset + 3]
            sl = layout["root_euler_rates"]
            qd[3:6] = vals[sl.offset:sl.offset + 3]
        elif d1 == 3:
            sl = layout["root_q"]
            q[0:3] = vals[sl.offset:sl.offset + 3]
            sl = layout["root_qd"]
            qd[0:3] = vals[sl.offset:sl.offset + 3]
        if tree.joint_dof_total:
            sl = layout["joint_angles"]
            q[d1:] = vals[sl.offset:sl.offset + sl.length]
            sl = layout["joint_rates"]
            qd[d1:] = vals[sl.offset:sl.offset + sl.length]
        gs_rec = dyn.GeneralizedState(q, qd)

        s_orig = build_limb_state(task, gs, target=target)
        s_rec = build_limb_state(task, gs_rec, target=target)
        assert np.max(np.abs(s_orig.values - s_rec.values)) < 1e-10


def test_reacher_task_vector_is_target_minus_fingertip():
    task = get_task("reacher_hard")
    gs = random_state(task, RNG)
    target = np.array([0.1, -0.05, 0.1])
    sv = build_limb_state(task, gs, target=target)
    sl = sv.layout["target"]
    kin = forward_kinematics(task.morphology, gs)
    ee = kin.p[-1] + kin.R[-1] @ task.morphology.limbs[-1].contact_points[0]
    assert np.allclose(sv.values[sl.offset:sl.offset + 3], target - ee, atol=1e-12)
