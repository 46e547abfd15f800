"""Quaternion and rigid-transform primitives shared by both engines.

Quaternions are stored w-first as length-4 numpy arrays. Poses pair a
3-vector position with a unit quaternion and compose left-to-right
(parent then child).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_NORM_TOL = 1e-9


def vec3(x: float = 0.0, y: float = 0.0, z: float = 0.0) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over the last axis; avoids np.cross overhead on the
    small arrays this package lives on."""
    shape = a.shape if a.shape == b.shape else np.broadcast_shapes(a.shape, b.shape)
    out = np.empty(shape)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate one vector (3,) or a stack (n, 3) by unit quaternion q."""
    v = np.asarray(v, dtype=float)
    u = q[1:]
    w = q[0]
    t = 2.0 * cross3(u, v)
    return v + w * t + cross3(u, t)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * angle
    q = np.empty(4)
    q[0] = np.cos(half)
    q[1:] = np.sin(half) * axis / n
    return q


def quat_from_rotvec(w: np.ndarray) -> np.ndarray:
    """Exponential map: rotation vector (axis * angle) to quaternion."""
    w = np.asarray(w, dtype=float)
    angle = np.linalg.norm(w)
    q = np.empty(4)
    q[0] = np.cos(0.5 * angle)
    if angle < 1e-12:
        q[1:] = 0.5 * w  # first-order series, exact at w = 0
    else:
        q[1:] = np.sin(0.5 * angle) * w / angle
    return quat_normalize(q)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Log map: unit quaternion to rotation vector with angle in [0, pi]."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    s = np.linalg.norm(q[1:])
    if s < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * np.arctan2(s, q[0])
    return angle * q[1:] / s


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rot_z(theta: float) -> np.ndarray:
    return np.array([np.cos(0.5 * theta), 0.0, 0.0, np.sin(0.5 * theta)])


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Unsigned angle between two nonzero vectors, in [0, pi]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.linalg.norm(np.cross(a, b))
    dot = float(np.dot(a, b))
    return float(np.arctan2(cross, dot))


def signed_planar_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Signed angle from a to b after projecting both onto the x-y plane.

    Positive is counterclockwise about +z; the 180-degree tie resolves
    to +pi (counterclockwise).
    """
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    ang = np.arctan2(ay, ax)
    angle = float(np.arctan2(by, bx) - ang)
    if angle > np.pi:
        angle -= 2.0 * np.pi
    elif angle <= -np.pi:
        angle += 2.0 * np.pi
    return angle


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: position (m) plus unit quaternion orientation."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        quat = np.asarray(self.orientation, dtype=float).reshape(4)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(quat))):
            raise ValueError("pose components must be finite")
        norm = np.linalg.norm(quat)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm} too far from 1")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", quat / norm)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), quat_identity())

    @staticmethod
    def from_xyz(x: float = 0.0, y: float = 0.0, z: float = 0.0,
                 orientation: np.ndarray | None = None) -> "Pose":
        return Pose(vec3(x, y, z),
                    quat_identity() if orientation is None else orientation)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.position + quat_rotate(self.orientation, other.position),
                    quat_multiply(self.orientation, other.orientation))

    def inverse(self) -> "Pose":
        inv_q = quat_conjugate(self.orientation)
        return Pose(-quat_rotate(inv_q, self.position), inv_q)

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, p)

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, pts)

    def transform_direction(self, d: np.ndarray) -> np.ndarray:
        return quat_rotate(self.orientation, d)

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)


def pose_error(target: Pose, current: Pose) -> np.ndarray:
    """6-vector pose error: translation difference, then the rotation
    vector of the relative rotation (smooth near identity)."""
    err = np.empty(6)
    err[:3] = target.position - current.position
    rel = quat_multiply(target.orientation, quat_conjugate(current.orientation))
    err[3:] = quat_to_rotvec(rel)
    return err
