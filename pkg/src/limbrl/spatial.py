"""3D rotation and pose algebra.

Conventions used throughout the toolkit:

* world frame: x forward, y left, z up; gravity acts along -z.
* yaw rotations are rotations about the world z-axis, the subgroup of
  rotations that keep the gravity direction fixed.
* Euler angles are intrinsic z-y-x (yaw, pitch, roll), the unique
  convention in which pre-rotating a frame about the world z-axis shifts
  only the yaw angle.

Rotations are plain 3x3 ``numpy`` arrays; 3-vectors are length-3 arrays.
All functions return new arrays and never mutate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GimbalLock

# Unit gravity direction and default magnitude (m/s^2).
GRAVITY_DIR = np.array([0.0, 0.0, -1.0])
GRAVITY_ACCEL = 9.81

_GIMBAL_MARGIN = 1e-6


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross has ~15us overhead for single 3-vectors; this is the hot path.
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def yaw_rotation(alpha: float) -> np.ndarray:
    """Rotation by ``alpha`` about the world z-axis.

    The third row and column are exactly (0, 0, 1), so the gravity
    direction is fixed bit-for-bit, not merely to roundoff.
    """
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotate(r: np.ndarray, v: np.ndarray) -> np.ndarray:
    return r @ v


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues formula for a unit ``axis``."""
    c, s = math.cos(angle), math.sin(angle)
    k = skew(axis)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def rotation_from_omega(omega: np.ndarray, dt: float) -> np.ndarray:
    """Exponential-map increment for angular velocity ``omega`` over ``dt``."""
    th = math.sqrt(omega[0] ** 2 + omega[1] ** 2 + omega[2] ** 2) * dt
    if th < 1e-12:
        return np.eye(3) + skew(omega * dt)
    return rotation_about_axis(omega / (th / dt), th)


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """One polar-decomposition Newton step; adequate for near-orthonormal input.

    The step commutes with left-multiplication by an orthogonal matrix, so it
    does not disturb yaw equivariance.
    """
    return r @ (1.5 * np.eye(3) - 0.5 * (r.T @ r))


@dataclass(frozen=True)
class EulerZYX:
    """Intrinsic z-y-x Euler angles in radians.

    yaw and roll live in [-pi, pi), pitch in [-pi/2, pi/2].
    """

    yaw: float
    pitch: float
    roll: float

    def as_array(self) -> np.ndarray:
        return np.array([self.yaw, self.pitch, self.roll])


def rotation_from_euler(e: EulerZYX | np.ndarray) -> np.ndarray:
    if isinstance(e, EulerZYX):
        yaw, pitch, roll = e.yaw, e.pitch, e.roll
    else:
        yaw, pitch, roll = float(e[0]), float(e[1]), float(e[2])
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def euler_from_rotation(r: np.ndarray) -> EulerZYX:
    """Extract z-y-x Euler angles.

    Raises GimbalLock within 1e-6 of |pitch| = pi/2, where yaw and roll are
    no longer separable; callers must then stay on the matrix representation.
    """
    sp = -r[2, 0]
    sp = min(1.0, max(-1.0, sp))
    pitch = math.asin(sp)
    if abs(pitch) >= math.pi / 2.0 - _GIMBAL_MARGIN:
        raise GimbalLock(f"pitch {pitch:.9f} within guard band of +/-pi/2")
    yaw = math.atan2(r[1, 0], r[0, 0])
    roll = math.atan2(r[2, 1], r[2, 2])
    return EulerZYX(wrap_angle(yaw), pitch, wrap_angle(roll))


def euler_rate_matrix(e: EulerZYX | np.ndarray) -> np.ndarray:
    """Matrix E with world angular velocity = E @ (yaw_rate, pitch_rate, roll_rate)."""
    if isinstance(e, EulerZYX):
        yaw, pitch = e.yaw, e.pitch
    else:
        yaw, pitch = float(e[0]), float(e[1])
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    return np.array(
        [
            [0.0, -sy, cy * cp],
            [0.0, cy, sy * cp],
            [1.0, 0.0, -sp],
        ]
    )


def omega_from_euler_rates(e: EulerZYX | np.ndarray, rates: np.ndarray) -> np.ndarray:
    return euler_rate_matrix(e) @ rates


def euler_rates_from_omega(e: EulerZYX | np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Invert the rate map; singular at the gimbal-lock pitch."""
    pitch = e.pitch if isinstance(e, EulerZYX) else float(e[1])
    if abs(abs(pitch) - math.pi / 2.0) < _GIMBAL_MARGIN:
        raise GimbalLock("euler rates undefined at |pitch| = pi/2")
    return np.linalg.solve(euler_rate_matrix(e), omega)


def is_rotation(r: np.ndarray, tol: float = 1e-10) -> bool:
    return (
        r.shape == (3, 3)
        and np.max(np.abs(r.T @ r - np.eye(3))) < tol
        and abs(np.linalg.det(r) - 1.0) < tol
    )


@dataclass(frozen=True)
class Pose:
    """A frame placement: rotation plus translation, applied as R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ p + self.translation

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


IDENTITY_POSE = Pose(np.eye(3), np.zeros(3))
