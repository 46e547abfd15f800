"""Blackboard multi-agent planner.

The world state is the sole medium between agents: every tick, each due
agent reads the same pre-tick snapshot and emits a bounded contribution;
the scheduler sums the contributions, applies them with joint-limit
clamping, and refreshes the cached collision/visibility criteria.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    CollisionReport,
    Obstacle,
    VisionCone,
    cone_mesh,
    figure_collision,
    finite_difference_gradient,
    intersection_length,
    segment_hits,
)
from .kinematics import (
    ArticulatedFigure,
    Configuration,
    eye_pose,
    forward_kinematics,
    ik_step_damped,
    joint_world_axis,
    trunk_forward,
    vision_axis,
)
from .runlog import RunLog
from .transforms import Pose, angle_between, signed_planar_angle, vec3

AGENT_KINDS = ("attraction", "repulsion", "head_orientation", "visibility",
               "operator", "ik")

BOUND_TOL = 1e-12

STATUS_SUCCESS = "success"
STATUS_STALLED = "stalled"
STATUS_TICK_BUDGET = "tick_budget"
STATUS_RUNNING = "running"


@dataclass
class PlannerParams:
    delta_pos: float = 0.01          # m per contribution
    delta_or: float = 0.01           # rad per contribution
    tol_pos: float = 0.05            # m
    tol_or: float = 0.05             # rad
    max_ticks: int = 100_000
    stall_window: int = 200          # ticks
    stall_threshold: float = 0.001   # m of best-distance improvement
    fd_step_pos: float = 1e-3
    fd_step_rot: float = 1e-3
    cone_facets: int = 16

    def __post_init__(self):
        for name in ("delta_pos", "delta_or", "tol_pos", "tol_or", "max_ticks",
                     "stall_window", "stall_threshold", "fd_step_pos",
                     "fd_step_rot"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class AgentSpec:
    """Scheduler entry: `rate` is the activity period (acts when
    tick % rate == 0); Pause/Work maps to `active`."""

    id: int
    kind: str
    rate: int = 1
    active: bool = True
    delta_pos: float | None = None   # per-agent overrides of PlannerParams
    delta_or: float | None = None
    gain: float = 1.0                # operator device scaling
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.rate < 1:
            raise ValueError("agent rate must be >= 1")

    def caps(self, params: PlannerParams) -> tuple[float, float]:
        return (self.delta_pos if self.delta_pos is not None else params.delta_pos,
                self.delta_or if self.delta_or is not None else params.delta_or)


@dataclass(eq=False)
class Contribution:
    """Per-tick deltas emitted by one agent, bounded by its caps."""

    agent_id: int
    base: np.ndarray                 # dx, dy, dheading
    head: np.ndarray                 # dpitch, dyaw
    delta_pos: float
    delta_or: float
    joints: np.ndarray | None = None
    plateau: bool = False

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float).reshape(3)
        self.head = np.asarray(self.head, dtype=float).reshape(2)
        if np.linalg.norm(self.base[:2]) > self.delta_pos + BOUND_TOL:
            raise ValueError("planar contribution exceeds its positional cap")
        if abs(self.base[2]) > self.delta_or + BOUND_TOL:
            raise ValueError("heading contribution exceeds its angular cap")
        if np.any(np.abs(self.head) > self.delta_or + BOUND_TOL):
            raise ValueError("head contribution exceeds its angular cap")

    @staticmethod
    def zero(agent_id: int, delta_pos: float, delta_or: float,
             plateau: bool = False) -> "Contribution":
        return Contribution(agent_id, np.zeros(3), np.zeros(2),
                            delta_pos, delta_or, plateau=plateau)

    def is_zero(self) -> bool:
        return (not np.any(self.base) and not np.any(self.head)
                and (self.joints is None or not np.any(self.joints)))


@dataclass(eq=False)
class Target:
    position: np.ndarray      # T
    direction: np.ndarray     # unit approach/view direction toward the base plane

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("target direction must be nonzero")
        self.direction = d / n


@dataclass
class World:
    """Immutable scene shared by all agents."""

    figure: ArticulatedFigure
    obstacles: list[Obstacle]


class WorldState:
    """Blackboard snapshot: the configuration plus caches recomputed on
    every applied tick."""

    def __init__(self, world: World, config: Configuration, target: Target,
                 cone: VisionCone | None, tick: int = 0,
                 cone_facets: int = 16):
        self.world = world
        self.config = config
        self.target = target
        self.tick = tick
        self.cone_facets = cone_facets
        self.cone = cone
        self.refresh()

    def refresh(self) -> None:
        figure = self.world.figure
        self.poses = forward_kinematics(figure, self.config)
        self.collision: CollisionReport = figure_collision(
            self.world.obstacles, figure, self.config)
        if figure.eye_link is not None:
            eye = eye_pose(figure, self.poses)
            self.eye_position = eye.position
            self.sight_axis = vision_axis(figure, self.poses)
            self.target_angle = angle_between(self.sight_axis,
                                              self.target.direction)
            self.st_hits, self.occlusion = segment_hits(
                self.eye_position, self.target.position, self.world.obstacles)
            if self.cone is not None:
                # floor keeps the cone mesh non-degenerate as the eye
                # reaches the target
                rng = max(np.linalg.norm(self.target.position
                                         - self.eye_position), 1e-2)
                self.cone = replace(self.cone, apex=self.eye_position,
                                    axis=self.sight_axis, range=rng)
                self.cone_overlap = _cone_overlap(self.cone, self.cone_facets,
                                                  self.world.obstacles)
            else:
                self.cone_overlap = 0.0
        else:
            self.eye_position = None
            self.sight_axis = None
            self.target_angle = None
            self.st_hits, self.occlusion = [], 0.0
            self.cone_overlap = 0.0

    def planar_distance(self) -> float:
        return float(np.linalg.norm(self.target.position[:2]
                                    - self.config.base[:2]))

    def heading_error(self) -> float:
        fwd = trunk_forward(self.world.figure, self.config)
        return signed_planar_angle(fwd, self.target.direction)

    def advanced(self, config: Configuration,
                 half_angle: float | None) -> "WorldState":
        cone = self.cone
        if cone is not None and half_angle is not None:
            cone = replace(cone, half_angle=half_angle)
        return WorldState(self.world, config, self.target, cone,
                          tick=self.tick + 1, cone_facets=self.cone_facets)


def _cone_overlap(cone: VisionCone, facets: int, obstacles) -> float:
    mesh = cone_mesh(cone, facets)
    total = 0.0
    for obstacle in obstacles:
        total += intersection_length(mesh, Pose.identity(), obstacle.mesh,
                                     obstacle.pose).total_length
    return total


# --- elementary agents ------------------------------------------------------

def attraction_contribution(state: WorldState, spec: AgentSpec,
                            params: PlannerParams) -> Contribution:
    """Pull the base toward the target and align the trunk forward axis
    with the approach direction; ties at 180 degrees turn counterclockwise."""
    dp, do = spec.caps(params)
    base = np.zeros(3)
    to_target = state.target.position[:2] - state.config.base[:2]
    dist = float(np.linalg.norm(to_target))
    if dist > params.tol_pos:
        base[:2] = min(dp, dist) * to_target / dist
    angle = state.heading_error()
    if abs(angle) > params.tol_or:
        base[2] = np.sign(angle) * min(do, abs(angle))
    return Contribution(spec.id, base, np.zeros(2), dp, do)


def repulsion_contribution(state: WorldState, spec: AgentSpec,
                           params: PlannerParams) -> Contribution:
    """Descend the collision-line-length criterion over the base DOFs."""
    dp, do = spec.caps(params)
    if state.collision.total_length == 0.0:
        return Contribution.zero(spec.id, dp, do)
    grad = finite_difference_gradient(
        lambda c: figure_collision(state.world.obstacles, state.world.figure,
                                   c).total_length,
        state.world.figure, state.config, ("x", "y", "theta"),
        params.fd_step_pos, params.fd_step_rot)
    norm = float(np.linalg.norm(grad))
    if norm == 0.0:
        return Contribution.zero(spec.id, dp, do, plateau=True)
    unit = grad / norm
    return Contribution(spec.id, -unit * np.array([dp, dp, do]), np.zeros(2),
                        dp, do)


def _rotation_to(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation vector taking unit a onto unit b."""
    axis = np.cross(a, b)
    n = np.linalg.norm(axis)
    angle = angle_between(a, b)
    if n < 1e-12:
        if angle < 1e-9:
            return np.zeros(3)
        helper = vec3(1.0, 0.0, 0.0)
        if abs(np.dot(a, helper)) > 0.9:
            helper = vec3(0.0, 0.0, 1.0)
        axis = np.cross(a, helper)
        return angle * axis / np.linalg.norm(axis)
    return angle * axis / n


def _limit_clip(value: float, q: float, limits: tuple[float, float]) -> float:
    return float(np.clip(value, limits[0] - q, limits[1] - q))


def head_orientation_contribution(state: WorldState, spec: AgentSpec,
                                  params: PlannerParams) -> Contribution:
    """Rotate the head's pitch and yaw so the vision axis approaches the
    target direction, never exceeding the neck limits."""
    dp, do = spec.caps(params)
    figure = state.world.figure
    if figure.head_joints is None or figure.eye_link is None:
        raise ValueError("head orientation agent needs a figure with a head")
    error = _rotation_to(state.sight_axis, state.target.direction)
    head = np.zeros(2)
    pitch_name, _, yaw_name = figure.head_joints
    for k, name in enumerate((pitch_name, yaw_name)):
        axis = joint_world_axis(figure, state.config, state.poses, name)
        component = float(np.dot(error, axis))
        delta = np.sign(component) * min(do, abs(component))
        idx = figure.joint_index(name)
        head[k] = _limit_clip(delta, state.config.joints[idx],
                              figure.link(name).joint.limits)
    return Contribution(spec.id, np.zeros(3), head, dp, do)


def visibility_contribution(state: WorldState, spec: AgentSpec,
                            params: PlannerParams
                            ) -> tuple[Contribution, float | None]:
    """Keep the eye-target segment and the vision cone free of the
    environment; widen the cone while clear, narrow it while blocked."""
    dp, do = spec.caps(params)
    figure = state.world.figure
    if figure.eye_link is None or state.cone is None:
        raise ValueError("visibility agent needs a figure with an eye and a cone")
    cone = state.cone
    criterion_value = state.occlusion + state.cone_overlap
    if criterion_value == 0.0:
        widened = min(cone.half_angle + cone.widen_step, cone.max_half_angle)
        return Contribution.zero(spec.id, dp, do), widened
    narrowed = max(cone.half_angle - cone.widen_step, cone.min_half_angle)

    target = state.target

    def criterion(config: Configuration) -> float:
        poses = forward_kinematics(figure, config)
        eye = eye_pose(figure, poses)
        _, occ = segment_hits(eye.position, target.position,
                              state.world.obstacles)
        rng = max(np.linalg.norm(target.position - eye.position), 1e-2)
        probe = VisionCone(eye.position, vision_axis(figure, poses),
                           cone.half_angle, rng, cone.min_half_angle,
                           cone.max_half_angle, cone.widen_step)
        return occ + _cone_overlap(probe, state.cone_facets,
                                   state.world.obstacles)

    pitch_name, _, yaw_name = figure.head_joints
    dofs = ("x", "y", "theta", pitch_name, yaw_name)
    grad = finite_difference_gradient(criterion, figure, state.config, dofs,
                                      params.fd_step_pos, params.fd_step_rot)
    norm = float(np.linalg.norm(grad))
    if norm == 0.0:
        return Contribution.zero(spec.id, dp, do, plateau=True), narrowed
    unit = grad / norm
    base = -unit[:3] * np.array([dp, dp, do])
    head = -unit[3:] * do
    for k, name in enumerate((pitch_name, yaw_name)):
        idx = figure.joint_index(name)
        head[k] = _limit_clip(head[k], state.config.joints[idx],
                              figure.link(name).joint.limits)
    return Contribution(spec.id, base, head, dp, do), narrowed


def operator_contribution(state: WorldState, spec: AgentSpec,
                          params: PlannerParams,
                          sample: np.ndarray | None) -> Contribution:
    """Turn the latest device sample into a normalized contribution; the
    planar pair is capped in norm like the automatic agents."""
    dp, do = spec.caps(params)
    if sample is None:
        return Contribution.zero(spec.id, dp, do)
    sample = np.asarray(sample, dtype=float)
    caps = np.array([dp, dp, do, do, do])
    scaled = np.sign(sample) * np.minimum(np.abs(sample) * spec.gain, caps)
    planar = float(np.linalg.norm(scaled[:2]))
    if planar > dp:
        scaled[:2] *= dp / planar
    return Contribution(spec.id, scaled[:3], scaled[3:], dp, do)


def ik_contribution(state: WorldState, spec: AgentSpec,
                    params: PlannerParams) -> Contribution:
    """Robot variant: step the joints toward the target end-effector pose
    with damped least squares, keeping the aspect."""
    dp, do = spec.caps(params)
    figure = state.world.figure
    frame = spec.params.get("frame")
    if frame is None:
        raise ValueError("ik agent needs a 'frame' parameter")
    damping = float(spec.params.get("damping", 0.05))
    current = state.poses[frame]
    target = Pose(state.target.position, current.orientation)
    dq = ik_step_damped(figure, state.config, frame, target, damping)
    caps = np.array([do if link.joint.kind == "revolute" else dp
                     for link in figure.jointed_links])
    worst = np.max(np.abs(dq) / caps) if np.any(dq) else 0.0
    if worst > 1.0:
        dq = dq / worst
    contribution = Contribution.zero(spec.id, dp, do)
    contribution.joints = dq
    return contribution


def compute_contribution(state: WorldState, spec: AgentSpec,
                         params: PlannerParams,
                         operator_sample: np.ndarray | None = None
                         ) -> tuple[Contribution, float | None]:
    if spec.kind == "attraction":
        return attraction_contribution(state, spec, params), None
    if spec.kind == "repulsion":
        return repulsion_contribution(state, spec, params), None
    if spec.kind == "head_orientation":
        return head_orientation_contribution(state, spec, params), None
    if spec.kind == "visibility":
        return visibility_contribution(state, spec, params)
    if spec.kind == "operator":
        return operator_contribution(state, spec, params, operator_sample), None
    if spec.kind == "ik":
        return ik_contribution(state, spec, params), None
    raise ValueError(f"unknown agent kind {spec.kind!r}")


# --- scheduling -------------------------------------------------------------

class OperatorQueue:
    """Thread-safe bounded sample queue; newest sample wins, the agent
    drains it on activation."""

    def __init__(self, capacity: int = 64):
        self._samples: deque = deque(maxlen=capacity)
        self._lock = threading.Lock()

    def push(self, sample) -> None:
        sample = np.asarray(sample, dtype=float).ravel()
        if sample.size == 3:
            sample = np.concatenate([sample, np.zeros(2)])
        if sample.size != 5:
            raise ValueError("operator samples have 3 or 5 components")
        with self._lock:
            self._samples.append(sample)

    def pop_latest(self) -> np.ndarray | None:
        with self._lock:
            if not self._samples:
                return None
            latest = self._samples[-1]
            self._samples.clear()
            return latest


def set_agent_control(agents: list[AgentSpec], agent_id: int, field_name: str,
                      value) -> AgentSpec:
    """Pause/Work, rate, and normalization edits; effective at the next
    tick boundary."""
    for spec in agents:
        if spec.id == agent_id:
            break
    else:
        raise KeyError(f"unknown agent {agent_id}")
    if field_name == "active":
        spec.active = bool(value)
    elif field_name == "rate":
        value = int(value)
        if value < 1:
            raise ValueError("rate must be >= 1")
        spec.rate = value
    elif field_name in ("delta_pos", "delta_or"):
        value = float(value)
        if value <= 0.0:
            raise ValueError(f"{field_name} must be positive")
        setattr(spec, field_name, value)
    else:
        raise ValueError(f"unknown agent control field {field_name!r}")
    return spec


def tick(state: WorldState, agents: list[AgentSpec], params: PlannerParams,
         operator_queue: OperatorQueue | None = None
         ) -> tuple[WorldState, list[Contribution]]:
    """One scheduler step: due agents read the pre-tick snapshot in
    ascending id order, their contributions sum, limits clamp, caches
    refresh."""
    due = sorted((a for a in agents if a.active and state.tick % a.rate == 0),
                 key=lambda a: a.id)
    contributions: list[Contribution] = []
    half_angle: float | None = None
    for spec in due:
        sample = None
        if spec.kind == "operator" and operator_queue is not None:
            sample = operator_queue.pop_latest()
        contribution, cone_update = compute_contribution(state, spec, params,
                                                         sample)
        contributions.append(contribution)
        if cone_update is not None:
            half_angle = cone_update

    figure = state.world.figure
    base = state.config.base.copy()
    joints = state.config.joints.copy()
    for c in contributions:
        base[:3] += c.base
        if c.joints is not None:
            joints += c.joints
    if figure.head_joints is not None:
        pitch_name, _, yaw_name = figure.head_joints
        head_total = np.zeros(2)
        for c in contributions:
            head_total += c.head
        joints[figure.joint_index(pitch_name)] += head_total[0]
        joints[figure.joint_index(yaw_name)] += head_total[1]
    config = Configuration(base, joints).clamped(figure)
    return state.advanced(config, half_angle), contributions


# --- planning loop ----------------------------------------------------------

def parse_operator_trace(text: str) -> list[tuple[int, np.ndarray]]:
    """Scripted operator file: `tick, dx, dy, dtheta[, dalpha, dthead]`
    per line; blank lines and # comments ignored."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 6):
            raise ValueError(f"trace line {lineno}: expected 4 or 6 fields")
        try:
            at = int(parts[0])
            values = np.array([float(p) for p in parts[1:]])
        except ValueError:
            raise ValueError(f"trace line {lineno}: bad number") from None
        if values.size == 3:
            values = np.concatenate([values, np.zeros(2)])
        entries.append((at, values))
    entries.sort(key=lambda e: e[0])
    return entries


@dataclass
class PlanResult:
    status: str
    ticks_used: int
    log: RunLog
    stalled: bool
    final_state: WorldState


class Planner:
    """Deterministic planning loop over a scene, with an operator queue
    and tick-boundary control commands."""

    def __init__(self, world: World, config: Configuration, target: Target,
                 agents: list[AgentSpec], params: PlannerParams,
                 cone: VisionCone | None = None,
                 operator_trace: list[tuple[int, np.ndarray]] | None = None):
        if world.figure.eye_link is not None and cone is None:
            poses = forward_kinematics(world.figure, config)
            eye = eye_pose(world.figure, poses)
            cone = VisionCone(
                eye.position, vision_axis(world.figure, poses),
                np.radians(2.0),
                max(np.linalg.norm(target.position - eye.position), 1e-2))
        self.state = WorldState(world, config, target, cone,
                                cone_facets=params.cone_facets)
        self.agents = agents
        self.params = params
        self.operator_queue = OperatorQueue()
        self.trace = operator_trace or []
        self._trace_pos = 0
        self._commands: list[tuple[int, str, object]] = []
        self._command_lock = threading.Lock()
        self._best_distance: list[float] = [self.state.planar_distance()]
        self.log = RunLog()
        self._record([])

    # -- external control ----------------------------------------------

    def queue_command(self, agent_id: int, field_name: str, value) -> None:
        with self._command_lock:
            self._commands.append((agent_id, field_name, value))

    def set_target(self, position, direction=None) -> None:
        direction = (self.state.target.direction if direction is None
                     else direction)
        with self._command_lock:
            self._commands.append((-1, "target",
                                   Target(np.asarray(position, dtype=float),
                                          direction)))

    # -- loop ------------------------------------------------------------

    def _apply_boundary_commands(self) -> None:
        with self._command_lock:
            commands, self._commands = self._commands, []
        for agent_id, field_name, value in commands:
            if field_name == "target":
                self.state.target = value
                self.state.refresh()
                # intermediate target: restart the stall window
                self._best_distance = [self.state.planar_distance()]
            else:
                set_agent_control(self.agents, agent_id, field_name, value)

    def _feed_trace(self) -> None:
        while (self._trace_pos < len(self.trace)
               and self.trace[self._trace_pos][0] <= self.state.tick):
            self.operator_queue.push(self.trace[self._trace_pos][1])
            self._trace_pos += 1

    def _record(self, contributions: list[Contribution],
                status: str = STATUS_RUNNING) -> None:
        state = self.state
        record = {
            "tick": state.tick,
            "base": [float(v) for v in state.config.base],
            "l": state.collision.total_length,
            "distance": state.planar_distance(),
            "heading_error": state.heading_error(),
            "status": status,
            "contributions": {
                str(c.agent_id): {
                    "base": [float(v) for v in c.base],
                    "head": [float(v) for v in c.head],
                    **({"joints": [float(v) for v in c.joints]}
                       if c.joints is not None else {}),
                    **({"plateau": True} if c.plateau else {}),
                } for c in contributions
            },
        }
        figure = state.world.figure
        if figure.head_joints is not None:
            record["head"] = [
                float(state.config.joints[figure.joint_index(n)])
                for n in figure.head_joints]
        if figure.eye_link is not None:
            record["occlusion"] = state.occlusion
            record["target_angle"] = state.target_angle
            if state.cone is not None:
                record["half_angle"] = state.cone.half_angle
                record["cone_overlap"] = state.cone_overlap
        if figure.n_joints and figure.head_joints is None:
            record["joints"] = [float(v) for v in state.config.joints]
        self.log.append(record)

    def success(self) -> bool:
        state = self.state
        if state.planar_distance() > self.params.tol_pos:
            return False
        if abs(state.heading_error()) > self.params.tol_or:
            return False
        if state.collision.total_length != 0.0:
            return False
        if state.world.figure.eye_link is not None:
            if state.occlusion != 0.0:
                return False
            if state.cone is not None and state.target_angle > state.cone.half_angle:
                return False
        return True

    def step(self) -> list[Contribution]:
        self._apply_boundary_commands()
        self._feed_trace()
        self.state, contributions = tick(self.state, self.agents, self.params,
                                         self.operator_queue)
        best = min(self._best_distance[-1], self.state.planar_distance())
        self._best_distance.append(best)
        self._record(contributions)
        return contributions

    def _stalled(self) -> bool:
        window = self.params.stall_window
        if len(self._best_distance) <= window:
            return False
        improvement = self._best_distance[-window - 1] - self._best_distance[-1]
        return improvement < self.params.stall_threshold

    def run(self) -> PlanResult:
        status = STATUS_RUNNING
        while True:
            if self.success():
                status = STATUS_SUCCESS
                break
            if self.state.tick >= self.params.max_ticks:
                status = STATUS_TICK_BUDGET
                break
            self.step()
            if self._stalled():
                status = STATUS_STALLED
                break
        if self.log.records:
            self.log.records[-1]["status"] = status
        return PlanResult(status, self.state.tick, self.log,
                          status == STATUS_STALLED, self.state)
