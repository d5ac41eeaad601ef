import json

import numpy as np
import pytest

from limbrl.audit import audit_step_equivariance, random_state
from limbrl.dynamics import (
    GeneralizedState,
    Simulator,
    bias_forces,
    forward_kinematics,
    initial_state,
    mass_matrix,
    mechanical_energy,
    rotate_internal,
    sample_target,
)
from limbrl.errors import GimbalLock, NumericalBlowup
from limbrl.morphology import get_task, load_morphology
from limbrl.spatial import rotation_about_axis, wrap_angle, yaw_rotation

RNG = np.random.default_rng(7)


def _two_link_task():
    doc = {
        "name": "two_link",
        "limbs": [
            {"name": "base", "mass": 1.0, "inertia": [0.01, 0.01, 0.01],
             "com_offset": [0, 0, 0], "joint_anchor": [0, 0, 0]},
            {"name": "l1", "mass": 1.0, "inertia": [0.01, 0.01, 0.001],
             "com_offset": [0, 0, -0.5], "joint_anchor": [0, 0, 0]},
            {"name": "l2", "mass": 1.0, "inertia": [0.01, 0.01, 0.001],
             "com_offset": [0, 0, -0.5], "joint_anchor": [0, 0, -1.0]},
        ],
        "joints": [
            {"parent": 0, "child": 1, "dof": 1, "axes": [[0, 1, 0]],
             "angle_limits": [None], "gear": [1.0], "damping": [0.0]},
            {"parent": 1, "child": 2, "dof": 1, "axes": [[0, 1, 0]],
             "angle_limits": [None], "gear": [1.0], "damping": [0.0]},
        ],
        "root": {"dof": 0},
        "task": {"reward": "run", "target_direction": [1, 0, 0]},
    }
    return load_morphology(json.dumps(doc))


def test_rest_pose_fk():
    task = get_task("cheetah2d_run")
    tree = task.morphology
    gs = GeneralizedState(np.zeros(tree.state_dof), np.zeros(tree.state_dof))
    kin = forward_kinematics(tree, gs)
    for i in range(tree.n_limbs):
        assert np.allclose(kin.R[i], np.eye(3))
    # chain of rest offsets: back thigh at -0.5, its shin 0.25 below
    assert np.allclose(kin.p[1], [-0.5, 0, 0])
    assert np.allclose(kin.p[2], [-0.5, 0, -0.25])
    assert np.allclose(kin.p[3], [-0.5, 0, -0.5])


def test_two_link_hand_trigonometry():
    # quarter turn at the first hinge: link2's anchor swings to -x
    task = _two_link_task()
    gs = GeneralizedState(np.array([np.pi / 2, 0.0]), np.zeros(2))
    kin = forward_kinematics(task.morphology, gs)
    # link direction R_y(pi/2) @ (0,0,-1) = (-1, 0, 0)
    assert np.allclose(kin.p[2], [-1.0, 0.0, 0.0], atol=1e-12)
    gs2 = GeneralizedState(np.array([np.pi / 2, -np.pi / 2]), np.zeros(2))
    kin2 = forward_kinematics(task.morphology, gs2)
    ee = kin2.p[2] + kin2.R[2] @ np.array([0, 0, -1.0])
    assert np.allclose(ee, [-1.0, 0.0, -1.0], atol=1e-12)


@pytest.mark.parametrize("name", ["cheetah2d_run", "hopper3d_hop", "reacher_hard",
                                  "walker3d_run"])
def test_fk_velocity_consistency(name):
    # (fk(q + eps qdot).p - fk(q).p) / eps -> v
    task = get_task(name)
    tree = task.morphology
    eps = 1e-6
    for _ in range(100):
        gs = random_state(task, RNG)
        kin = forward_kinematics(tree, gs)
        gs2 = GeneralizedState(gs.q + eps * gs.qdot, gs.qdot, gs.frame_yaw)
        kin2 = forward_kinematics(tree, gs2)
        v_fd = (kin2.p - kin.p) / eps
        assert np.max(np.abs(v_fd - kin.v)) < 2e-4


def test_single_free_body_mass_matrix():
    doc = {
        "name": "free_body",
        "limbs": [{"name": "body", "mass": 2.5, "inertia": [0.3, 0.4, 0.5],
                   "com_offset": [0, 0, 0], "joint_anchor": [0, 0, 0]}],
        "joints": [],
        "root": {"dof": 6},
        "task": {"reward": "run", "target_direction": [1, 0, 0]},
    }
    task = load_morphology(json.dumps(doc))
    M = mass_matrix(task.morphology, np.zeros(6))
    expected = np.zeros((6, 6))
    expected[:3, :3] = 2.5 * np.eye(3)
    expected[3:, 3:] = np.diag([0.3, 0.4, 0.5])
    assert np.allclose(M, expected, atol=1e-12)


def test_mass_matrix_symmetric_everywhere():
    for name in ("hopper3d_hop", "walker2d_run", "humanoid_run"):
        task = get_task(name)
        for _ in range(20):
            gs = random_state(task, RNG)
            M = mass_matrix(task.morphology, gs.q)
            assert np.max(np.abs(M - M.T)) < 1e-12
            assert np.min(np.linalg.eigvalsh(M)) > 0


def test_equilibrium_is_exact():
    # zero gravity, zero velocity, zero action: the state does not move
    task = get_task("hopper3d_hop")
    tree = task.morphology
    sim = Simulator(task, contact=False, damping=False, limits=False, gravity=0.0)
    q = np.zeros(tree.state_dof)
    q[2] = 1.0
    q[tree.root_dof:] = RNG.uniform(-0.3, 0.3, tree.joint_dof_total)
    gs = GeneralizedState(q, np.zeros(tree.state_dof))
    res = sim.step(gs, np.zeros(tree.action_size))
    assert np.array_equal(res.gs.q, gs.q)
    assert np.array_equal(res.gs.qdot, gs.qdot)


def test_ballistic_free_fall():
    task = get_task("hopper3d_hop")
    tree = task.morphology
    sim = Simulator(task, contact=False, damping=False, limits=False)
    gs = GeneralizedState(np.zeros(tree.state_dof), np.zeros(tree.state_dof))
    gs.q[2] = 0.95
    t = 0.0
    for _ in range(25):  # 0.5 s at dt_control = 0.02
        gs = sim.step(gs, np.zeros(tree.action_size)).gs
        t += task.dt_control
    assert abs(gs.q[2] - (0.95 - 0.5 * 9.81 * t * t)) < 1e-4


@pytest.mark.parametrize("name", ["cheetah2d_run", "hopper3d_hop", "reacher_hard"])
def test_step_equivariance(name):
    task = get_task(name)
    rng = np.random.default_rng(11)
    assert audit_step_equivariance(task, 60, rng) < 1e-8


def test_rotate_internal_identity_and_involution():
    for name in ("hopper3d_hop", "cheetah2d_run", "reacher_hard"):
        task = get_task(name)
        gs = random_state(task, RNG)
        z = rotate_internal(task.morphology, gs, 0.0)
        assert np.allclose(z.q, gs.q) and np.allclose(z.qdot, gs.qdot)
        assert abs(wrap_angle(z.frame_yaw - gs.frame_yaw)) < 1e-15
        twice = rotate_internal(task.morphology,
                                rotate_internal(task.morphology, gs, np.pi), np.pi)
        assert np.max(np.abs(twice.q - gs.q)) < 1e-12
        assert np.max(np.abs(twice.qdot - gs.qdot)) < 1e-12
        assert abs(wrap_angle(twice.frame_yaw - gs.frame_yaw)) < 1e-12


@pytest.mark.parametrize("name", ["hopper3d_hop", "walker2d_run", "reacher_hard"])
def test_rotate_internal_commutes_with_fk(name):
    # fk(rotate(gs)) = vectors rotated, joint angles untouched
    task = get_task(name)
    tree = task.morphology
    for _ in range(50):
        gs = random_state(task, RNG)
        alpha = RNG.uniform(0, 2 * np.pi)
        R = yaw_rotation(alpha)
        kin = forward_kinematics(tree, gs)
        kin_rot = forward_kinematics(tree, rotate_internal(tree, gs, alpha))
        assert np.max(np.abs(kin_rot.p - kin.p @ R.T)) < 1e-10
        assert np.max(np.abs(kin_rot.v - kin.v @ R.T)) < 1e-10
        assert np.max(np.abs(kin_rot.omega - kin.omega @ R.T)) < 1e-10
        for i in range(len(kin.joint_axes)):
            assert np.max(np.abs(kin_rot.joint_axes[i] - kin.joint_axes[i] @ R.T)) < 1e-10
        for i in range(tree.n_limbs):
            assert np.max(np.abs(kin_rot.R[i] - R @ kin.R[i])) < 1e-10


def test_reward_yaw_invariance_with_cotarget():
    for name in ("cheetah3d_run", "hopper3d_hop", "reacher_hard", "walker3d_run"):
        task = get_task(name)
        sim = Simulator(task)
        for _ in range(25):
            gs = random_state(task, RNG)
            target = sample_target(task, RNG)
            alpha = RNG.uniform(0, 2 * np.pi)
            t_rot = None if target is None else yaw_rotation(alpha) @ target
            r0 = sim.reward_at(gs, target)
            r1 = sim.reward_at(rotate_internal(task.morphology, gs, alpha), t_rot)
            assert abs(r0 - r1) < 1e-10


def test_rewards_unit_interval():
    for name in ("cheetah2d_run", "hopper3d_hop", "reacher_hard", "humanoid_stand"):
        task = get_task(name)
        sim = Simulator(task)
        for _ in range(40):
            gs = random_state(task, RNG)
            r = sim.reward_at(gs, sample_target(task, RNG))
            assert 0.0 <= r <= 1.0


def test_energy_drift_free_float():
    # conservative core: contact, damping, limits and actuation off
    task = get_task("hopper3d_hop")
    tree = task.morphology
    sim = Simulator(task, contact=False, damping=False, limits=False)
    gs = GeneralizedState(np.zeros(tree.state_dof), np.zeros(tree.state_dof))
    gs.q[2] = 1.0
    gs.q[tree.root_dof:] = RNG.uniform(-0.3, 0.3, tree.joint_dof_total)
    gs.qdot[3:6] = RNG.uniform(-0.5, 0.5, 3)
    gs.qdot[tree.root_dof:] = RNG.uniform(-1.0, 1.0, tree.joint_dof_total)
    e0 = mechanical_energy(tree, gs, armature=task.armature)
    ke_peak = 0.0
    for _ in range(500):  # 10 simulated seconds
        gs = sim.step(gs, np.zeros(tree.action_size)).gs
        e = mechanical_energy(tree, gs, armature=task.armature)
        pe = sum(l.mass for l in tree.limbs) * 9.81 * gs.q[2]
        ke_peak = max(ke_peak, abs(e - pe))
    e1 = mechanical_energy(tree, gs, armature=task.armature)
    assert abs(e1 - e0) / max(ke_peak, 1.0) < 0.01


def test_step_determinism_bitwise():
    task = get_task("hopper3d_hop")
    sim_a = Simulator(task)
    sim_b = Simulator(task)
    gs = initial_state(task, np.random.default_rng(3))
    a = np.random.default_rng(4).uniform(-1, 1, task.morphology.action_size)
    ra = sim_a.step(gs.copy(), a)
    rb = sim_b.step(gs.copy(), a)
    assert np.array_equal(ra.gs.q, rb.gs.q)
    assert np.array_equal(ra.gs.qdot, rb.gs.qdot)
    assert ra.reward == rb.reward


def test_numerical_blowup_raises():
    task = get_task("hopper3d_hop")
    tree = task.morphology
    sim = Simulator(task)
    gs = GeneralizedState(np.zeros(tree.state_dof), np.zeros(tree.state_dof))
    gs.q[2] = 0.95
    gs.qdot[:] = 5e6  # beyond the representable regime
    with pytest.raises(NumericalBlowup):
        sim.step(gs, np.zeros(tree.action_size))


def test_gimbal_lock_raises_on_vertical_pitch():
    task = get_task("hopper3d_hop")
    tree = task.morphology
    sim = Simulator(task, contact=False, damping=False, limits=False, gravity=0.0)
    gs = GeneralizedState(np.zeros(tree.state_dof), np.zeros(tree.state_dof))
    gs.q[2] = 1.0
    gs.q[4] = np.pi / 2  # exactly at the singular pitch, not moving
    with pytest.raises(GimbalLock):
        sim.step(gs, np.zeros(tree.action_size))


def test_touch_sensors_ground_vs_airborne():
    task = get_task("hopper2d_hop")
    tree = task.morphology
    sim = Simulator(task)
    gs = GeneralizedState(np.zeros(tree.state_dof), np.zeros(tree.state_dof))
    gs.q[1] = task.init_root_height - 0.02  # rest pose, foot pressed into the ground
    grounded = sim.sensors_at(gs)
    assert np.all(grounded > 0.0)
    gs.q[1] += 1.0  # lift well clear of the ground
    airborne = sim.sensors_at(gs)
    assert np.all(airborne == 0.0)


def test_height_sensor_reads_torso_height():
    task = get_task("walker2d_run")
    gs = initial_state(task, np.random.default_rng(0))
    kin = forward_kinematics(task.morphology, gs)
    s = Simulator(task).sensors_at(gs)
    assert abs(s[0] - kin.p[0][2]) < 1e-12
