"""Articulated figures with a planar base: forward kinematics, Jacobians,
damped-least-squares IK preserving the solution branch (aspect)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transforms import (
    Pose,
    cross3,
    quat_from_axis_angle,
    quat_rotate,
    pose_error,
    rot_z,
    vec3,
)

REVOLUTE = "revolute"
PRISMATIC = "prismatic"

ASPECT_SINGULAR_TOL = 1e-9
DEFAULT_IK_DAMPING = 0.05


@dataclass(frozen=True, eq=False)
class Joint:
    """One actuated degree of freedom between a link and its parent."""

    kind: str
    axis: np.ndarray          # unit vector in the parent frame
    limits: tuple[float, float]

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("joint axis must be a unit vector")
        lo, hi = float(self.limits[0]), float(self.limits[1])
        if lo > hi:
            raise ValueError(f"joint limits out of order: {lo} > {hi}")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "limits", (lo, hi))

    def motion(self, q: float) -> Pose:
        if self.kind == REVOLUTE:
            return Pose(np.zeros(3), quat_from_axis_angle(self.axis, q))
        return Pose(self.axis * q, np.array([1.0, 0.0, 0.0, 0.0]))


@dataclass(frozen=True, eq=False)
class Link:
    """A rigid body in the chain; `origin` is the fixed transform from the
    parent link frame to this link's joint frame."""

    name: str
    parent: str | None = None
    joint: Joint | None = None
    origin: Pose = field(default_factory=Pose.identity)
    mesh: "object | None" = None  # TriMesh in the link frame, if it collides


@dataclass
class ArticulatedFigure:
    """Kinematic tree rooted at a planar base (x, y, heading, optional z)."""

    links: list[Link]
    has_z: bool = False
    forward_axis: np.ndarray = field(default_factory=lambda: vec3(0.0, 1.0, 0.0))
    head_joints: tuple[str, str, str] | None = None  # pitch, roll, yaw link names
    eye_link: str | None = None
    eye_offset: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        self.forward_axis = np.asarray(self.forward_axis, dtype=float).reshape(3)
        names = set()
        roots = []
        for link in self.links:
            if link.name in names:
                raise ValueError(f"duplicate link name {link.name!r}")
            if link.parent is None:
                roots.append(link.name)
            elif link.parent not in names:
                raise ValueError(
                    f"link {link.name!r} references parent {link.parent!r} "
                    "before it is defined")
            names.add(link.name)
        if len(roots) != 1:
            raise ValueError(f"figure must have exactly one root link, got {roots}")
        if self.head_joints is not None:
            for name in self.head_joints:
                if name not in names:
                    raise ValueError(f"head joint link {name!r} does not exist")
        if self.eye_link is not None and self.eye_link not in names:
            raise ValueError(f"eye link {self.eye_link!r} does not exist")
        self._by_name = {link.name: link for link in self.links}
        self._jointed = [link for link in self.links if link.joint is not None]
        self._joint_index = {link.name: i for i, link in enumerate(self._jointed)}

    @property
    def root(self) -> Link:
        return self.links[0]

    @property
    def jointed_links(self) -> list[Link]:
        return self._jointed

    @property
    def n_base(self) -> int:
        return 4 if self.has_z else 3

    @property
    def n_joints(self) -> int:
        return len(self._jointed)

    @property
    def n_dofs(self) -> int:
        return self.n_base + self.n_joints

    def link(self, name: str) -> Link:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown link {name!r}") from None

    def joint_index(self, name: str) -> int:
        if name not in self._joint_index:
            raise KeyError(f"link {name!r} has no joint")
        return self._joint_index[name]

    def joint_limits(self) -> np.ndarray:
        return np.array([link.joint.limits for link in self._jointed])


@dataclass(frozen=True, eq=False)
class Configuration:
    """base = (x, y, heading[, z]); joints follow figure tree order."""

    base: np.ndarray
    joints: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).ravel()
        joints = np.asarray(self.joints, dtype=float).ravel()
        if base.size not in (3, 4):
            raise ValueError("base must have 3 or 4 entries")
        if not (np.all(np.isfinite(base)) and np.all(np.isfinite(joints))):
            raise ValueError("configuration must be finite")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "joints", joints)

    def clamped(self, figure: ArticulatedFigure) -> "Configuration":
        limits = figure.joint_limits()
        if limits.size == 0:
            return self
        return Configuration(self.base.copy(),
                             np.clip(self.joints, limits[:, 0], limits[:, 1]))

    def replace(self, base: np.ndarray | None = None,
                joints: np.ndarray | None = None) -> "Configuration":
        return Configuration(self.base if base is None else base,
                             self.joints if joints is None else joints)


def _check_dimensions(figure: ArticulatedFigure, config: Configuration) -> None:
    if config.base.size != figure.n_base:
        raise ValueError(
            f"base has {config.base.size} entries, figure expects {figure.n_base}")
    if config.joints.size != figure.n_joints:
        raise ValueError(
            f"config has {config.joints.size} joint values, "
            f"figure has {figure.n_joints} joints")


def base_pose(figure: ArticulatedFigure, config: Configuration) -> Pose:
    x, y, theta = config.base[:3]
    z = config.base[3] if figure.has_z else 0.0
    return Pose(vec3(x, y, z), rot_z(theta))


def forward_kinematics(figure: ArticulatedFigure,
                       config: Configuration) -> dict[str, Pose]:
    """Compose the base planar transform, then joint transforms root to
    leaves. Returns world pose per link name."""
    _check_dimensions(figure, config)
    poses: dict[str, Pose] = {}
    for link in figure.links:
        parent = base_pose(figure, config) if link.parent is None \
            else poses[link.parent]
        pose = parent.compose(link.origin)
        if link.joint is not None:
            q = config.joints[figure.joint_index(link.name)]
            pose = pose.compose(link.joint.motion(q))
        poses[link.name] = pose
    return poses


def _ancestors_with_joint(figure: ArticulatedFigure, frame: str) -> set[str]:
    chain = set()
    name: str | None = frame
    while name is not None:
        link = figure.link(name)
        if link.joint is not None:
            chain.add(name)
        name = link.parent
    return chain


def jacobian(figure: ArticulatedFigure, config: Configuration, frame: str,
             point: np.ndarray | None = None) -> np.ndarray:
    """6 x n Jacobian of a point attached to `frame` (point given in the
    link frame, default link origin). Rows are linear then angular;
    columns are base x, base y, base heading[, base z], then joints in
    tree order."""
    _check_dimensions(figure, config)
    poses = forward_kinematics(figure, config)
    if frame not in poses:
        raise KeyError(f"unknown frame {frame!r}")
    target = poses[frame].transform_point(
        np.zeros(3) if point is None else np.asarray(point, dtype=float))

    J = np.zeros((6, figure.n_dofs))
    J[0, 0] = 1.0  # base x
    J[1, 1] = 1.0  # base y
    # Base heading: rotation about the vertical through the base position.
    origin = base_pose(figure, config).position
    z_axis = vec3(0.0, 0.0, 1.0)
    J[:3, 2] = cross3(z_axis, target - origin)
    J[3:, 2] = z_axis
    if figure.has_z:
        J[2, 3] = 1.0

    moving = _ancestors_with_joint(figure, frame)
    for link in figure.jointed_links:
        if link.name not in moving:
            continue
        col = figure.n_base + figure.joint_index(link.name)
        parent = base_pose(figure, config) if link.parent is None \
            else poses[link.parent]
        joint_frame = parent.compose(link.origin)
        axis_world = joint_frame.transform_direction(link.joint.axis)
        if link.joint.kind == REVOLUTE:
            J[:3, col] = cross3(axis_world, target - joint_frame.position)
            J[3:, col] = axis_world
        else:
            J[:3, col] = axis_world
    return J


def _positioning_rows(figure: ArticulatedFigure, lin: np.ndarray) -> np.ndarray:
    """Square positioning sub-Jacobian from the 3 x n linear block of the
    joints-only Jacobian."""
    n = lin.shape[1]
    if n == 2:
        axes = [link.joint.axis for link in figure.jointed_links]
        # Parallel-axis (planar) pair: project onto the plane normal to
        # the shared axis with a deterministic basis.
        if np.linalg.norm(cross3(axes[0], axes[1])) < 1e-9:
            a = axes[0] / np.linalg.norm(axes[0])
            helper = vec3(1.0, 0.0, 0.0)
            if abs(np.dot(a, helper)) > 0.9:
                helper = vec3(0.0, 1.0, 0.0)
            e1 = cross3(a, helper)
            e1 /= np.linalg.norm(e1)
            e2 = cross3(a, e1)
            return np.vstack([e1 @ lin, e2 @ lin])
        # Skew pair: pick the coordinate-row pair with the largest
        # determinant magnitude (fixed preference order on ties).
        best = None
        for rows in ((0, 1), (0, 2), (1, 2)):
            sub = lin[list(rows), :]
            d = abs(np.linalg.det(sub))
            if best is None or d > best[0] + 1e-15:
                best = (d, sub)
        return best[1]
    return lin[:, :3] if n > 3 else lin


def aspect_sign(figure: ArticulatedFigure, config: Configuration,
                frame: str | None = None) -> int:
    """Sign of det of the square positioning sub-Jacobian over joints only;
    0 within tolerance means the configuration is singular."""
    if figure.n_joints < 2:
        raise ValueError("aspect requires at least two non-base joints")
    if frame is None:
        frame = figure.links[-1].name
    J = jacobian(figure, config, frame)
    lin = J[:3, figure.n_base:]
    square = _positioning_rows(figure, lin)
    if square.shape[0] != square.shape[1]:
        square = square[:square.shape[1], :square.shape[1]]
    det = float(np.linalg.det(square))
    if abs(det) <= ASPECT_SINGULAR_TOL:
        return 0
    return 1 if det > 0.0 else -1


def ik_step_damped(figure: ArticulatedFigure, config: Configuration, frame: str,
                   target: Pose, damping: float = DEFAULT_IK_DAMPING,
                   point: np.ndarray | None = None) -> np.ndarray:
    """One damped-least-squares IK step over the joint DOFs.

    Returns joint deltas. If applying them would flip the aspect sign,
    the step is halved (up to 20 times) until the sign is preserved,
    and zeroed if no scale preserves it.
    """
    if damping <= 0.0:
        raise ValueError("damping must be positive")
    _check_dimensions(figure, config)
    poses = forward_kinematics(figure, config)
    if frame not in poses:
        raise KeyError(f"unknown frame {frame!r}")
    current = poses[frame] if point is None else Pose(
        poses[frame].transform_point(point), poses[frame].orientation)
    err = pose_error(target, current)
    J = jacobian(figure, config, frame, point)[:, figure.n_base:]
    gram = J @ J.T + damping * damping * np.eye(6)
    dq = J.T @ np.linalg.solve(gram, err)

    if figure.n_joints < 2 or not np.any(dq):
        return dq
    sign0 = aspect_sign(figure, config, frame)
    if sign0 == 0:
        return dq
    scale = 1.0
    for _ in range(21):
        candidate = config.replace(joints=config.joints + scale * dq)
        if aspect_sign(figure, candidate, frame) == sign0:
            return scale * dq
        scale *= 0.5
    return np.zeros_like(dq)


def joint_world_axis(figure: ArticulatedFigure, config: Configuration,
                     poses: dict[str, Pose], link_name: str) -> np.ndarray:
    """World direction of a link's joint axis."""
    link = figure.link(link_name)
    if link.joint is None:
        raise ValueError(f"link {link_name!r} has no joint")
    parent = base_pose(figure, config) if link.parent is None \
        else poses[link.parent]
    return parent.compose(link.origin).transform_direction(link.joint.axis)


def eye_pose(figure: ArticulatedFigure, poses: dict[str, Pose]) -> Pose:
    if figure.eye_link is None:
        raise ValueError("figure has no eye link")
    return poses[figure.eye_link].compose(figure.eye_offset)


def vision_axis(figure: ArticulatedFigure, poses: dict[str, Pose]) -> np.ndarray:
    """World direction of the vision axis (the eye frame's forward +y)."""
    return eye_pose(figure, poses).transform_direction(vec3(0.0, 1.0, 0.0))


def trunk_forward(figure: ArticulatedFigure, config: Configuration) -> np.ndarray:
    """World direction of the trunk forward axis."""
    return base_pose(figure, config).transform_direction(figure.forward_axis)
