"""Passive virtual guides: a sliding virtual mechanism coupled to a
controlled frame through a damped spring, so precise-motion constraints
are enforced without projecting errors."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .transforms import Pose, angle_between, pose_error, vec3


def default_guide_stiffness() -> np.ndarray:
    return np.diag([1000.0] * 3 + [50.0] * 3)


def default_guide_damping() -> np.ndarray:
    return np.eye(6) * 20.0


@dataclass(eq=False)
class VirtualMechanism:
    """One sliding DOF along a fixed axis with a fixed orientation; the
    coupling spring acts between its moving pose and the avatar frame."""

    name: str
    anchor: np.ndarray
    axis: np.ndarray
    orientation: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    state: float = 0.0                  # slide position (m)
    rate: float = 0.0                   # slide velocity (m/s)
    slide_damping: float = 5.0
    stiffness: np.ndarray = field(default_factory=default_guide_stiffness)
    damping: np.ndarray = field(default_factory=default_guide_damping)
    tool_axis: np.ndarray = field(default_factory=lambda: vec3(0.0, 0.0, 1.0))
    slide_locked: bool = False          # spotlight variant: orientation only

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float).reshape(3)
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("guide axis must be a unit vector")
        self.axis = axis
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(4)
        if self.slide_damping < 0.0:
            raise ValueError("slide damping must be non-negative")
        self.stiffness = np.asarray(self.stiffness, dtype=float).reshape(6, 6)
        self.damping = np.asarray(self.damping, dtype=float).reshape(6, 6)
        self.tool_axis = np.asarray(self.tool_axis, dtype=float).reshape(3)

    def pose(self) -> Pose:
        return Pose(self.anchor + self.state * self.axis, self.orientation)

    def dof_map(self) -> np.ndarray:
        """Maps slide rate to the mechanism frame twist."""
        out = np.zeros(6)
        if not self.slide_locked:
            out[:3] = self.axis
        return out


def guide_wrench(mech: VirtualMechanism, frame_pose: Pose,
                 frame_twist: np.ndarray) -> tuple[np.ndarray, float]:
    """Damped-spring wrench pulling the frame toward the mechanism pose,
    and the equal-and-opposite generalized force on the slide DOF."""
    frame_twist = np.asarray(frame_twist, dtype=float).reshape(6)
    error = pose_error(mech.pose(), frame_pose)
    mech_twist = mech.dof_map() * mech.rate
    wrench = mech.stiffness @ error + mech.damping @ (mech_twist - frame_twist)
    slide_force = -float(mech.dof_map() @ wrench)
    return wrench, slide_force


def step_mechanism(mech: VirtualMechanism, generalized_force: float,
                   dt: float) -> VirtualMechanism:
    """First-order slide dynamics: slide_damping * rate = force."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if mech.slide_locked:
        return replace(mech, rate=0.0)
    if mech.slide_damping <= 0.0:
        raise ValueError("slide damping must be positive to step the mechanism")
    rate = generalized_force / mech.slide_damping
    return replace(mech, rate=rate, state=mech.state + rate * dt)


def axis_error(frame_pose: Pose, mech: VirtualMechanism) -> float:
    """Angle between the frame's tool axis and the guide axis, in [0, pi]."""
    world_tool = frame_pose.transform_direction(mech.tool_axis)
    return angle_between(world_tool, mech.axis)
