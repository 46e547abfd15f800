"""Ready-made articulated figures: the box-trunk manikin with a three-axis
neck, and planar test chains."""

from __future__ import annotations

import numpy as np

from .geometry import TriMesh
from .kinematics import ArticulatedFigure, Configuration, Joint, Link
from .transforms import Pose, vec3

HEAD_PITCH = "head_pitch"
HEAD_ROLL = "head_roll"
HEAD_YAW = "head_yaw"

# Adult averages are configurable per scenario; these defaults cover a
# typical comfortable range.
DEFAULT_PITCH_LIMITS = (np.radians(-40.0), np.radians(35.0))
DEFAULT_ROLL_LIMITS = (np.radians(-40.0), np.radians(40.0))
DEFAULT_YAW_LIMITS = (np.radians(-70.0), np.radians(70.0))


def manikin_figure(trunk_size=(0.4, 0.3, 1.5),
                   neck_height: float | None = None,
                   eye_forward: float = 0.1,
                   eye_up: float = 0.1,
                   pitch_limits=DEFAULT_PITCH_LIMITS,
                   roll_limits=DEFAULT_ROLL_LIMITS,
                   yaw_limits=DEFAULT_YAW_LIMITS,
                   carried_box=None,
                   has_z: bool = False) -> ArticulatedFigure:
    """Box trunk on the planar base, three stacked neck revolutes
    (pitch about trunk x, roll about y, yaw about z), and an eye frame
    looking along the head's +y. `carried_box` (center, size) rigidly
    attaches a carried object to the trunk."""
    w, d, h = trunk_size
    if neck_height is None:
        neck_height = h
    trunk_mesh = TriMesh.box((0.0, 0.0, h / 2.0), (w, d, h))
    links = [
        Link("trunk", mesh=trunk_mesh),
        Link(HEAD_PITCH, parent="trunk",
             joint=Joint("revolute", vec3(1, 0, 0), pitch_limits),
             origin=Pose.from_xyz(0.0, 0.0, neck_height)),
        Link(HEAD_ROLL, parent=HEAD_PITCH,
             joint=Joint("revolute", vec3(0, 1, 0), roll_limits)),
        Link(HEAD_YAW, parent=HEAD_ROLL,
             joint=Joint("revolute", vec3(0, 0, 1), yaw_limits)),
    ]
    if carried_box is not None:
        center, size = carried_box
        links.append(Link("carried", parent="trunk",
                          mesh=TriMesh.box(center, size)))
    return ArticulatedFigure(
        links,
        has_z=has_z,
        forward_axis=vec3(0.0, 1.0, 0.0),
        head_joints=(HEAD_PITCH, HEAD_ROLL, HEAD_YAW),
        eye_link=HEAD_YAW,
        eye_offset=Pose.from_xyz(0.0, eye_forward, eye_up),
    )


def manikin_home(figure: ArticulatedFigure,
                 x: float = 0.0, y: float = 0.0,
                 heading: float = 0.0) -> Configuration:
    base = [x, y, heading] + ([0.0] if figure.has_z else [])
    return Configuration(np.array(base), np.zeros(figure.n_joints))


def planar_chain(lengths, limits=None, axis=(0.0, 0.0, 1.0),
                 tip_name: str = "tip") -> ArticulatedFigure:
    """Planar nR chain in the x-y plane: link i extends along +x by
    lengths[i]; a fixed tip link marks the end effector."""
    if limits is None:
        limits = [(-np.pi, np.pi)] * len(lengths)
    links = [Link("chain_base")]
    parent = "chain_base"
    offset = 0.0
    for i, (length, lim) in enumerate(zip(lengths, limits)):
        name = f"link{i + 1}"
        links.append(Link(name, parent=parent,
                          joint=Joint("revolute", np.asarray(axis, dtype=float), lim),
                          origin=Pose.from_xyz(offset, 0.0, 0.0)))
        parent = name
        offset = length
    links.append(Link(tip_name, parent=parent, origin=Pose.from_xyz(offset, 0.0, 0.0)))
    return ArticulatedFigure(links, forward_axis=vec3(1.0, 0.0, 0.0))
