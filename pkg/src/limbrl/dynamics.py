"""Reduced-coordinate forward kinematics and dynamics for limb trees.

The generalized state is ``q, qdot`` of length d = d1 + sum of joint DoFs.
Root blocks by mobility:

* d1 = 0: no root coordinates; the ``frame_yaw`` field on the state
  carries the yaw placement of the welded base.
* d1 = 3 (planar): q = (x, z, pitch) in the agent's vertical plane; the
  plane itself is yawed by ``frame_yaw``; qdot holds the coordinate rates.
* d1 = 6 (free): q = (position, yaw-pitch-roll Euler angles); qdot =
  (world linear velocity, Euler-angle rates). Inside the integrator the
  orientation lives as a rotation matrix with a world angular velocity;
  Euler angles appear only at this array boundary.

``frame_yaw`` exists so a yaw rotation of the whole scene is always
representable: for planar and welded roots the rotation cannot be
expressed in q itself.

Velocity coordinates used by the dynamics ("u"): world linear and angular
velocity for a free root, coordinate rates otherwise, then joint rates.
The mass matrix comes from the composite-rigid-body algorithm with all
spatial quantities expressed at the world origin; bias forces come from a
recursive Newton-Euler sweep at zero acceleration. Ground contact is a
spring-damper normal force plus viscous tangential drag at tagged points,
which keeps every force term exactly symmetric under yaw rotation.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from .errors import NumericalBlowup, SingularMass
from .morphology import MorphologyTree, TaskSpec
from .spatial import (
    GRAVITY_ACCEL,
    cross,
    euler_from_rotation,
    euler_rates_from_omega,
    omega_from_euler_rates,
    orthonormalize,
    rotation_about_axis,
    rotation_from_euler,
    rotation_from_omega,
    skew,
    wrap_angle,
    yaw_rotation,
)

BLOWUP_LIMIT = 1e6

_Z = np.array([0.0, 0.0, 1.0])
_Y = np.array([0.0, 1.0, 0.0])


@dataclass
class GeneralizedState:
    """Joint coordinates and velocities, plus the scene yaw for immobile roots."""

    q: np.ndarray
    qdot: np.ndarray
    frame_yaw: float = 0.0

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(self.q.copy(), self.qdot.copy(), self.frame_yaw)


@dataclass
class LimbKinematics:
    """World-frame pose and velocity of every limb plus world joint axes.

    ``joint_axes[i]`` holds the (dof, 3) world rotation axes of the joint
    whose child is limb ``i + 1``.
    """

    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    joint_axes: tuple


@dataclass(frozen=True)
class ContactModel:
    """Spring-damper ground plane at z = 0 with viscous tangential drag."""

    stiffness: float
    damping: float
    tangential: float

    @staticmethod
    def from_task(task: TaskSpec) -> "ContactModel":
        return ContactModel(
            task.contact_stiffness, task.contact_damping, task.contact_tangential
        )


@dataclass
class StepResult:
    gs: GeneralizedState
    reward: float
    sensors: np.ndarray


# ------------------------------------------------------------------ model


class _Model:
    """Arrays compiled once per MorphologyTree for fast evaluation."""

    def __init__(self, tree: MorphologyTree):
        self.tree = tree
        n = tree.n_limbs
        self.n = n
        self.root_dof = tree.root_dof
        self.mass = np.array([l.mass for l in tree.limbs])
        self.inertia = [l.inertia for l in tree.limbs]
        self.com = [l.com_offset for l in tree.limbs]
        self.anchor = [l.joint_anchor for l in tree.limbs]

        self.parent = np.full(n, -1, dtype=int)
        self.joint_of = [None] * n
        for j in tree.joints:
            self.parent[j.child] = j.parent
            self.joint_of[j.child] = j

        self.d = tree.state_dof
        self.m = tree.joint_dof_total
        self.body_dofs = [[] for _ in range(n)]
        self.body_dofs[0] = list(range(self.root_dof))
        self.dof_range = [(0, self.root_dof)] + [None] * (n - 1)
        self.joint_slice = [None] * n
        nxt, joff = self.root_dof, 0
        for b in range(1, n):
            dof = self.joint_of[b].dof
            self.body_dofs[b] = list(range(nxt, nxt + dof))
            self.dof_range[b] = (nxt, nxt + dof)
            self.joint_slice[b] = slice(joff, joff + dof)
            nxt += dof
            joff += dof

        # joint axis fast-path codes: (axis index, sign) for coordinate axes
        self.axis_code = [None] * n
        for b in range(1, n):
            codes = []
            for a in self.joint_of[b].axes:
                code = None
                for i in range(3):
                    if abs(abs(a[i]) - 1.0) < 1e-14 and abs(a[(i+1) % 3]) < 1e-14 \
                            and abs(a[(i+2) % 3]) < 1e-14:
                        code = (i, 1.0 if a[i] > 0 else -1.0)
                self.axis_code[b] = None
                codes.append(code)
            self.axis_code[b] = codes

        self.ancestors = []
        for b in range(n):
            chain, a = [], b
            while a != -1:
                chain.append(a)
                a = self.parent[a]
            self.ancestors.append(chain)

        self.contacts = tuple(
            (b, pt) for b, limb in enumerate(tree.limbs) for pt in limb.contact_points
        )
        self.contact_index = {}
        for ci, (b, _) in enumerate(self.contacts):
            self.contact_index.setdefault(b, []).append(ci)

        lo, hi, gear, damp = [], [], [], []
        for b in range(1, n):
            j = self.joint_of[b]
            for k in range(j.dof):
                lim = j.angle_limits[k]
                lo.append(-np.inf if lim is None else lim[0])
                hi.append(np.inf if lim is None else lim[1])
                gear.append(j.gear[k])
                damp.append(j.damping[k])
        self.limit_lo = np.array(lo)
        self.limit_hi = np.array(hi)
        self.gear = np.array(gear)
        self.joint_damping = np.array(damp)


_MODELS: "weakref.WeakKeyDictionary[MorphologyTree, _Model]" = weakref.WeakKeyDictionary()


def _model(tree: MorphologyTree) -> _Model:
    model = _MODELS.get(tree)
    if model is None:
        model = _Model(tree)
        _MODELS[tree] = model
    return model


# ------------------------------------------------- internal state and FK


class _IState:
    """Integrator-side state: matrix orientation, world velocities."""

    __slots__ = ("root_pos", "root_R", "root_v", "root_w", "planar", "jq", "jqd", "yaw_R")

    def __init__(self, root_pos, root_R, root_v, root_w, planar, jq, jqd, yaw_R):
        self.root_pos = root_pos
        self.root_R = root_R
        self.root_v = root_v
        self.root_w = root_w
        self.planar = planar  # (x, z, pitch, xd, zd, pitchd) when d1 = 3
        self.jq = jq
        self.jqd = jqd
        self.yaw_R = yaw_R


def _internal_from_gs(model: _Model, gs: GeneralizedState) -> _IState:
    d1 = model.root_dof
    jq = gs.q[d1:].copy()
    jqd = gs.qdot[d1:].copy()
    yaw_R = yaw_rotation(gs.frame_yaw)
    if d1 == 6:
        e = gs.q[3:6]
        return _IState(
            gs.q[0:3].copy(),
            rotation_from_euler(e),
            gs.qdot[0:3].copy(),
            omega_from_euler_rates(e, gs.qdot[3:6]),
            None, jq, jqd, yaw_R,
        )
    if d1 == 3:
        return _IState(None, None, None, None,
                       np.concatenate([gs.q[0:3], gs.qdot[0:3]]), jq, jqd, yaw_R)
    return _IState(None, None, None, None, None, jq, jqd, yaw_R)


def _gs_from_internal(model: _Model, ist: _IState, frame_yaw: float) -> GeneralizedState:
    d1 = model.root_dof
    q = np.empty(model.d)
    qd = np.empty(model.d)
    if d1 == 6:
        e = euler_from_rotation(ist.root_R)
        q[0:3] = ist.root_pos
        q[3:6] = e.as_array()
        qd[0:3] = ist.root_v
        qd[3:6] = euler_rates_from_omega(e, ist.root_w)
    elif d1 == 3:
        q[0:3] = ist.planar[0:3]
        qd[0:3] = ist.planar[3:6]
    q[d1:] = ist.jq
    qd[d1:] = ist.jqd
    return GeneralizedState(q, qd, frame_yaw)


class _Kin:
    """Per-evaluation kinematics plus spatial DoF axes at the world origin."""

    __slots__ = ("x", "R", "c", "w", "v_x", "v_c", "S", "axes_w", "carry", "jqd")

    def __init__(self, n, d):
        self.x = [None] * n
        self.R = [None] * n
        self.c = [None] * n
        self.w = [None] * n
        self.v_x = [None] * n
        self.v_c = [None] * n
        self.S = np.zeros((d, 6))  # rows: (angular part, linear part at origin)
        self.axes_w = [None] * n
        self.carry = [None] * n  # angular velocity carried into each joint axis
        self.jqd = None


def _rot_coord_axis(i: int, sign: float, angle: float) -> np.ndarray:
    c = math.cos(angle)
    s = math.sin(angle) * sign
    out = np.empty((3, 3))
    if i == 0:
        out[0, 0] = 1.0; out[0, 1] = 0.0; out[0, 2] = 0.0
        out[1, 0] = 0.0; out[1, 1] = c; out[1, 2] = -s
        out[2, 0] = 0.0; out[2, 1] = s; out[2, 2] = c
    elif i == 1:
        out[0, 0] = c; out[0, 1] = 0.0; out[0, 2] = s
        out[1, 0] = 0.0; out[1, 1] = 1.0; out[1, 2] = 0.0
        out[2, 0] = -s; out[2, 1] = 0.0; out[2, 2] = c
    else:
        out[0, 0] = c; out[0, 1] = -s; out[0, 2] = 0.0
        out[1, 0] = s; out[1, 1] = c; out[1, 2] = 0.0
        out[2, 0] = 0.0; out[2, 1] = 0.0; out[2, 2] = 1.0
    return out


def _fk(model: _Model, ist: _IState) -> _Kin:
    n, d1 = model.n, model.root_dof
    kin = _Kin(n, model.d)
    kin.jqd = ist.jqd

    if d1 == 6:
        R0 = ist.root_R
        x0 = ist.root_pos + R0 @ model.anchor[0]
        w0 = ist.root_w
        v0 = ist.root_v + cross(w0, R0 @ model.anchor[0])
        for i in range(3):
            kin.S[i, 3 + i] = 1.0
            e = np.zeros(3)
            e[i] = 1.0
            kin.S[3 + i, 0:3] = e
            kin.S[3 + i, 3:6] = cross(ist.root_pos, e)
    elif d1 == 3:
        yaw_R = ist.yaw_R
        px, pz, beta, vx, vz, betad = ist.planar
        ex, ey = yaw_R[:, 0], yaw_R[:, 1]
        x0 = yaw_R @ (np.array([px, 0.0, pz]) + model.anchor[0])
        R0 = yaw_R @ rotation_about_axis(_Y, beta)
        v0 = vx * ex + vz * _Z
        w0 = betad * ey
        kin.S[0, 3:6] = ex
        kin.S[1, 3:6] = _Z
        kin.S[2, 0:3] = ey
        kin.S[2, 3:6] = cross(x0, ey)
    else:
        R0 = ist.yaw_R
        x0 = ist.yaw_R @ model.anchor[0]
        v0 = np.zeros(3)
        w0 = np.zeros(3)

    kin.x[0], kin.R[0], kin.v_x[0], kin.w[0] = x0, R0, v0, w0
    kin.c[0] = x0 + R0 @ model.com[0]
    kin.v_c[0] = v0 + cross(w0, kin.c[0] - x0)

    for b in range(1, n):
        p = model.parent[b]
        joint = model.joint_of[b]
        Rp, xp = kin.R[p], kin.x[p]
        anchor = xp + Rp @ model.anchor[b]
        v_anchor = kin.v_x[p] + cross(kin.w[p], anchor - xp)

        R_carry = Rp
        omega = kin.w[p]
        dof = joint.dof
        axes = np.empty((dof, 3))
        carries = np.empty((dof, 3))
        jsl = model.joint_slice[b]
        qk = ist.jq[jsl]
        qdk = ist.jqd[jsl]
        codes = model.axis_code[b]
        g0 = model.dof_range[b][0]
        for k in range(dof):
            axis_w = R_carry @ joint.axes[k]
            axes[k] = axis_w
            carries[k] = omega
            omega = omega + axis_w * qdk[k]
            code = codes[k]
            if code is not None:
                R_carry = R_carry @ _rot_coord_axis(code[0], code[1], qk[k])
            else:
                R_carry = R_carry @ rotation_about_axis(joint.axes[k], qk[k])
            kin.S[g0 + k, 0:3] = axis_w
            kin.S[g0 + k, 3:6] = cross(anchor, axis_w)

        kin.x[b] = anchor
        kin.R[b] = R_carry
        kin.v_x[b] = v_anchor
        kin.w[b] = omega
        kin.c[b] = anchor + R_carry @ model.com[b]
        kin.v_c[b] = v_anchor + cross(omega, kin.c[b] - anchor)
        kin.axes_w[b] = axes
        kin.carry[b] = carries
    return kin


def forward_kinematics(tree: MorphologyTree, gs: GeneralizedState) -> LimbKinematics:
    """World-frame limb poses, velocities and joint axes for a state."""
    model = _model(tree)
    kin = _fk(model, _internal_from_gs(model, gs))
    return LimbKinematics(
        p=np.array(kin.x),
        v=np.array(kin.v_x),
        R=np.array(kin.R),
        omega=np.array(kin.w),
        joint_axes=tuple(kin.axes_w[b] for b in range(1, model.n)),
    )


# --------------------------------------------------------- mass and bias


def _spatial_inertia_at_origin(m: float, c: np.ndarray, I_w: np.ndarray) -> np.ndarray:
    C = skew(c)
    out = np.empty((6, 6))
    out[0:3, 0:3] = I_w + m * (C @ C.T)
    out[0:3, 3:6] = m * C
    out[3:6, 0:3] = m * C.T
    out[3:6, 3:6] = m * np.eye(3)
    return out


def _crba(model: _Model, kin: _Kin) -> np.ndarray:
    n, d = model.n, model.d
    IC = np.empty((n, 6, 6))
    for b in range(n):
        R = kin.R[b]
        m_b = model.mass[b]
        c = kin.c[b]
        C = skew(c)
        blk = IC[b]
        blk[0:3, 0:3] = R @ model.inertia[b] @ R.T + m_b * (C @ C.T)
        blk[0:3, 3:6] = m_b * C
        blk[3:6, 0:3] = blk[0:3, 3:6].T
        blk[3:6, 3:6] = 0.0
        blk[3, 3] = blk[4, 4] = blk[5, 5] = m_b
    for b in range(n - 1, 0, -1):
        IC[model.parent[b]] += IC[b]

    M = np.zeros((d, d))
    S = kin.S
    for b in range(n):
        b0, b1 = model.dof_range[b]
        if b0 == b1:
            continue
        G = S[b0:b1] @ IC[b]
        for a in model.ancestors[b]:
            a0, a1 = model.dof_range[a]
            if a0 == a1:
                continue
            block = G @ S[a0:a1].T
            M[b0:b1, a0:a1] = block
            if a != b:
                M[a0:a1, b0:b1] = block.T
    return M


def _rnea_bias(model: _Model, kin: _Kin, gravity: float) -> np.ndarray:
    """Generalized Coriolis, centrifugal and gravity forces at zero acceleration."""
    n = model.n
    g_vec = np.array([0.0, 0.0, -gravity])
    alpha = [None] * n
    a_x = [None] * n
    alpha[0] = np.zeros(3)
    a_x[0] = np.zeros(3)

    for b in range(1, n):
        p = model.parent[b]
        r = kin.x[b] - kin.x[p]
        al = alpha[p].copy()
        ax = a_x[p] + cross(alpha[p], r) + cross(kin.w[p], cross(kin.w[p], r))
        qdk = kin.jqd[model.joint_slice[b]]
        axes, carries = kin.axes_w[b], kin.carry[b]
        for k in range(model.joint_of[b].dof):
            al += cross(carries[k], axes[k]) * qdk[k]
        alpha[b] = al
        a_x[b] = ax

    wrench = np.empty((n, 6))
    for b in range(n):
        r_c = kin.c[b] - kin.x[b]
        a_c = a_x[b] + cross(alpha[b], r_c) + cross(kin.w[b], cross(kin.w[b], r_c))
        R = kin.R[b]
        I_w = R @ model.inertia[b] @ R.T
        F = model.mass[b] * (a_c - g_vec)
        wrench[b, 0:3] = cross(kin.c[b], F) + I_w @ alpha[b] + cross(kin.w[b], I_w @ kin.w[b])
        wrench[b, 3:6] = F
    for b in range(n - 1, 0, -1):
        wrench[model.parent[b]] += wrench[b]

    bias = np.empty(model.d)
    for b in range(n):
        b0, b1 = model.dof_range[b]
        if b0 != b1:
            bias[b0:b1] = kin.S[b0:b1] @ wrench[b]
    return bias


def mass_matrix(tree: MorphologyTree, q: np.ndarray) -> np.ndarray:
    """Symmetric positive definite joint-space mass matrix at configuration q."""
    model = _model(tree)
    gs = GeneralizedState(np.asarray(q, dtype=float), np.zeros(model.d))
    kin = _fk(model, _internal_from_gs(model, gs))
    M = _crba(model, kin)
    if model.d and np.min(np.linalg.eigvalsh(M)) < 1e-12:
        raise SingularMass("mass matrix lost positive definiteness")
    return M


def bias_forces(tree: MorphologyTree, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    """Coriolis, centrifugal and gravity generalized forces (zero acceleration)."""
    model = _model(tree)
    gs = GeneralizedState(np.asarray(q, dtype=float), np.asarray(qdot, dtype=float))
    kin = _fk(model, _internal_from_gs(model, gs))
    return _rnea_bias(model, kin, GRAVITY_ACCEL)


# -------------------------------------------------------------- contacts


def _contact_forces(model: _Model, kin: _Kin, contact: ContactModel):
    """Per-contact world force vectors; zero rows where a point is airborne."""
    nc = len(model.contacts)
    forces = np.zeros((nc, 3))
    points = np.zeros((nc, 3))
    for ci, (b, local) in enumerate(model.contacts):
        xp = kin.x[b] + kin.R[b] @ local
        points[ci] = xp
        z = xp[2]
        if z >= 0.0:
            continue
        vp = kin.v_x[b] + cross(kin.w[b], xp - kin.x[b])
        fz = -contact.stiffness * z - contact.damping * vp[2]
        if fz <= 0.0:
            continue
        forces[ci, 0] = -contact.tangential * vp[0]
        forces[ci, 1] = -contact.tangential * vp[1]
        forces[ci, 2] = fz
    return forces, points


def _apply_point_forces(model: _Model, kin: _Kin, forces, points, tau):
    for ci, (b, _) in enumerate(model.contacts):
        f = forces[ci]
        if f[0] == 0.0 and f[1] == 0.0 and f[2] == 0.0:
            continue
        xp = points[ci]
        for a in model.ancestors[b]:
            for j in model.body_dofs[a]:
                s = kin.S[j]
                # velocity of the point per unit rate: S_lin + S_ang x p
                tau[j] += (
                    f[0] * (s[3] + s[1] * xp[2] - s[2] * xp[1])
                    + f[1] * (s[4] + s[2] * xp[0] - s[0] * xp[2])
                    + f[2] * (s[5] + s[0] * xp[1] - s[1] * xp[0])
                )
    return tau


# ------------------------------------------------------------- simulator


class Simulator:
    """Steps a task's dynamics; holds no mutable state of its own.

    Instances are cheap and independent; a single instance must not be
    stepped concurrently from several threads.
    """

    def __init__(self, task: TaskSpec, *, contact: bool = True, damping: bool = True,
                 limits: bool = True, gravity: float = GRAVITY_ACCEL):
        self.task = task
        self.model = _model(task.morphology)
        # Rotor inertia on joint DoFs; keeps M well conditioned when a
        # multi-DoF joint overshoots its soft limits into axis alignment.
        self.armature = task.armature
        self.contact = ContactModel.from_task(task) if contact else None
        self.enable_damping = damping
        self.enable_limits = limits
        self.gravity = gravity
        self.dt_sub = task.dt_control / task.physics_substeps

    # -- integration ----------------------------------------------------

    def _substep(self, ist: _IState, joint_tau_action: np.ndarray, dt: float):
        model = self.model
        kin = _fk(model, ist)
        M = _crba(model, kin)
        if self.armature:
            idx = np.arange(model.root_dof, model.d)
            M[idx, idx] += self.armature
        bias = _rnea_bias(model, kin, self.gravity)

        tau = np.zeros(model.d)
        jtau = joint_tau_action.copy()
        if self.enable_damping:
            jtau -= model.joint_damping * ist.jqd
        if self.enable_limits:
            below = ist.jq < model.limit_lo
            above = ist.jq > model.limit_hi
            k, c = self.task.joint_limit_stiffness, self.task.joint_limit_damping
            jtau[below] += k * (model.limit_lo[below] - ist.jq[below]) - c * ist.jqd[below]
            jtau[above] += k * (model.limit_hi[above] - ist.jq[above]) - c * ist.jqd[above]
        tau[model.root_dof:] = jtau

        if self.contact is not None and model.contacts:
            forces, points = _contact_forces(model, kin, self.contact)
            _apply_point_forces(model, kin, forces, points, tau)

        udot = np.linalg.solve(M, tau - bias)

        # Velocity update is explicit in the force, position update uses the
        # rate midpoint (velocity-Verlet); exact for ballistic flight, where
        # a plain rate*dt rule would drift by g*dt*t/2.
        d1 = model.root_dof
        if d1 == 6:
            v_new = ist.root_v + udot[0:3] * dt
            w_new = ist.root_w + udot[3:6] * dt
            ist.root_pos = ist.root_pos + 0.5 * (ist.root_v + v_new) * dt
            w_mid = 0.5 * (ist.root_w + w_new)
            if w_mid[0] != 0.0 or w_mid[1] != 0.0 or w_mid[2] != 0.0:
                ist.root_R = orthonormalize(
                    rotation_from_omega(w_mid, dt) @ ist.root_R
                )
            ist.root_v, ist.root_w = v_new, w_new
        elif d1 == 3:
            r_new = ist.planar[3:6] + udot[0:3] * dt
            ist.planar[0:3] += 0.5 * (ist.planar[3:6] + r_new) * dt
            ist.planar[3:6] = r_new
        jqd_new = ist.jqd + udot[d1:] * dt
        ist.jq = ist.jq + 0.5 * (ist.jqd + jqd_new) * dt
        ist.jqd = jqd_new

    def step(self, gs: GeneralizedState, action: np.ndarray,
             target: np.ndarray | None = None) -> StepResult:
        """Advance one control step of ``substeps`` physics substeps.

        ``action`` components are clipped to [-1, 1]; the applied torque is
        gear * action on each joint DoF. Raises NumericalBlowup when rates
        leave the representable regime, which the training loop treats as a
        terminal event.
        """
        model = self.model
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        if a.shape != (model.m,):
            raise ValueError(f"action shape {a.shape}, expected ({model.m},)")
        ist = _internal_from_gs(model, gs)
        jtau = model.gear * a
        for _ in range(self.task.physics_substeps):
            self._substep(ist, jtau, self.dt_sub)

        speed = np.max(np.abs(ist.jqd)) if model.m else 0.0
        if model.root_dof == 6:
            speed = max(speed, np.max(np.abs(ist.root_v)), np.max(np.abs(ist.root_w)))
        elif model.root_dof == 3:
            speed = max(speed, np.max(np.abs(ist.planar[3:6])))
        if not np.isfinite(speed) or speed > BLOWUP_LIMIT:
            raise NumericalBlowup(f"velocity magnitude {speed:.3e}")

        out = _gs_from_internal(model, ist, gs.frame_yaw)
        kin = _fk(model, ist)
        reward = self._reward(kin, target)
        sensors = self._sensors(kin)
        return StepResult(out, reward, sensors)

    # -- observation helpers --------------------------------------------

    def end_effector(self, kin_or_gs) -> np.ndarray:
        """Reach-task fingertip: the last limb's first marker point."""
        kin = kin_or_gs
        if isinstance(kin_or_gs, GeneralizedState):
            kin = _fk(self.model, _internal_from_gs(self.model, kin_or_gs))
            last = self.model.n - 1
            local = self._ee_local()
            return kin.x[last] + kin.R[last] @ local
        last = self.model.n - 1
        return kin.x[last] + kin.R[last] @ self._ee_local()

    def _ee_local(self) -> np.ndarray:
        limb = self.task.morphology.limbs[-1]
        return limb.contact_points[0] if limb.contact_points else np.zeros(3)

    def _reward(self, kin: _Kin, target: np.ndarray | None) -> float:
        task = self.task
        if target is None:
            target = task.target_direction
        kind = task.reward_kind
        if kind == "run":
            fwd = float(kin.v_x[0] @ target) / task.v_ref
            r = min(1.0, max(0.0, fwd))
        elif kind == "hop":
            up = min(1.0, max(0.0, kin.x[0][2] / task.z_ref))
            fwd = min(1.0, max(0.0, float(kin.v_x[0] @ target) / task.v_ref))
            r = 0.5 * up + 0.5 * fwd
        elif kind == "stand":
            r = min(1.0, max(0.0, kin.x[0][2] / task.z_ref))
        elif kind == "reach":
            if target is None:
                raise ValueError("reach tasks need a target point")
            last = self.model.n - 1
            ee = kin.x[last] + kin.R[last] @ self._ee_local()
            dist = float(np.linalg.norm(target - ee))
            r = min(1.0, max(0.0, 1.0 - dist / task.reach_ref))
        else:  # pragma: no cover - validated at load time
            raise ValueError(kind)
        return min(1.0, max(0.0, r))

    def _sensors(self, kin: _Kin) -> np.ndarray:
        task = self.task
        if not task.sensors:
            return np.zeros(0)
        touch = None
        vals = []
        for s in task.sensors:
            if s.kind == "height":
                vals.append(kin.x[0][2])
            elif s.kind == "touch":
                if touch is None:
                    if self.contact is not None:
                        touch, _ = _contact_forces(self.model, kin, self.contact)
                    else:
                        touch = np.zeros((len(self.model.contacts), 3))
                ci = self.model.contact_index[s.limb][s.point]
                vals.append(math.log1p(max(0.0, touch[ci][2])))
        return np.array(vals)

    def sensors_at(self, gs: GeneralizedState) -> np.ndarray:
        return self._sensors(_fk(self.model, _internal_from_gs(self.model, gs)))

    def reward_at(self, gs: GeneralizedState, target: np.ndarray | None = None) -> float:
        return self._reward(_fk(self.model, _internal_from_gs(self.model, gs)), target)


def step(task: TaskSpec, gs: GeneralizedState, action: np.ndarray,
         target: np.ndarray | None = None) -> StepResult:
    """One-shot convenience wrapper around Simulator.step."""
    return Simulator(task).step(gs, action, target)


# --------------------------------------------------- symmetry and energy


def rotate_internal(tree: MorphologyTree, gs: GeneralizedState,
                    alpha: float) -> GeneralizedState:
    """The state whose kinematics are the yaw rotation of ``gs`` by alpha.

    Free roots absorb the rotation into their coordinates (position and
    linear velocity rotate, Euler yaw shifts, rates are untouched); planar
    and welded roots carry it in ``frame_yaw``. Joint coordinates never
    change, matching the invariance of hinge angles under scene rotation.
    """
    d1 = tree.root_dof
    if d1 != 6:
        return GeneralizedState(gs.q.copy(), gs.qdot.copy(),
                                wrap_angle(gs.frame_yaw + alpha))
    R = yaw_rotation(alpha)
    q = gs.q.copy()
    qd = gs.qdot.copy()
    q[0:3] = R @ q[0:3]
    q[3] = wrap_angle(q[3] + alpha)
    qd[0:3] = R @ qd[0:3]
    return GeneralizedState(q, qd, gs.frame_yaw)


def mechanical_energy(tree: MorphologyTree, gs: GeneralizedState,
                      gravity: float = GRAVITY_ACCEL,
                      armature: float = 0.0) -> float:
    """Kinetic plus gravitational potential energy (potential datum z = 0).

    ``armature`` adds the rotor kinetic energy matching Simulator's mass
    matrix augmentation.
    """
    model = _model(tree)
    kin = _fk(model, _internal_from_gs(model, gs))
    e = 0.0
    for b in range(model.n):
        I_w = kin.R[b] @ model.inertia[b] @ kin.R[b].T
        e += 0.5 * model.mass[b] * float(kin.v_c[b] @ kin.v_c[b])
        e += 0.5 * float(kin.w[b] @ (I_w @ kin.w[b]))
        e += model.mass[b] * gravity * kin.c[b][2]
    if armature:
        jqd = gs.qdot[model.root_dof:]
        e += 0.5 * armature * float(jqd @ jqd)
    return e


def initial_state(task: TaskSpec, rng: np.random.Generator) -> GeneralizedState:
    """Rest pose with small joint-angle noise, clipped to the joint limits."""
    model = _model(task.morphology)
    q = np.zeros(model.d)
    qd = np.zeros(model.d)
    d1 = model.root_dof
    if d1 == 6:
        q[2] = task.init_root_height
    elif d1 == 3:
        q[1] = task.init_root_height
    if model.m:
        noise = rng.uniform(-task.init_angle_noise, task.init_angle_noise, model.m)
        lo = np.maximum(model.limit_lo, -np.pi)
        hi = np.minimum(model.limit_hi, np.pi)
        q[d1:] = np.clip(noise, lo, hi)
    return GeneralizedState(q, qd)


def sample_target(task: TaskSpec, rng: np.random.Generator) -> np.ndarray | None:
    """Per-episode task target: fixed direction for run/hop, random reach point."""
    if task.reward_kind == "reach":
        r = rng.uniform(task.target_radius[0], task.target_radius[1])
        th = rng.uniform(0.0, 2.0 * np.pi)
        return np.array([r * math.cos(th), r * math.sin(th), task.target_height])
    if task.target_direction is not None:
        return task.target_direction.copy()
    return None
