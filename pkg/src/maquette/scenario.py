"""Scenario files: versioned JSON describing the scene, the agent roster,
the dynamics setup, guides, and contact primitives. Loading validates
every reference and echoes defaults back into the object."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .control import TaskPort
from .figures import manikin_figure
from .geometry import Obstacle, TriMesh, VisionCone, load_mesh_text
from .guides import VirtualMechanism
from .kinematics import Configuration
from .lcp import BoxObstacle, HalfSpace, SphereObstacle
from .mocap import MocapTrajectory
from .planner import AgentSpec, Planner, PlannerParams, Target, World
from .simulate import (
    GuideBinding,
    PortBinding,
    RigidBody,
    Simulation,
    SimulationSettings,
)
from .transforms import Pose, quat_normalize

FORMAT_VERSION = 1

TOP_LEVEL_KEYS = {"format", "name", "figure", "obstacles", "target", "cone",
                  "agents", "planner", "dynamics", "seed"}


class ScenarioError(ValueError):
    pass


def _require(condition: bool, where: str, message: str) -> None:
    if not condition:
        raise ScenarioError(f"{where}: {message}")


def _number(data: dict, key: str, where: str, default=None, minimum=None,
            positive=False) -> float:
    if key not in data:
        _require(default is not None, f"{where}.{key}", "missing value")
        data[key] = default
    value = data[key]
    _require(isinstance(value, (int, float)) and np.isfinite(value),
             f"{where}.{key}", "must be a finite number")
    if positive:
        _require(value > 0, f"{where}.{key}", "must be positive")
    if minimum is not None:
        _require(value >= minimum, f"{where}.{key}", f"must be >= {minimum}")
    return float(value)


def _vector(data: dict, key: str, where: str, size: int,
            default=None) -> list[float]:
    if key not in data:
        _require(default is not None, f"{where}.{key}", "missing value")
        data[key] = list(default)
    value = data[key]
    _require(isinstance(value, list) and len(value) == size,
             f"{where}.{key}", f"must be a list of {size} numbers")
    _require(all(isinstance(v, (int, float)) and np.isfinite(v) for v in value),
             f"{where}.{key}", "entries must be finite numbers")
    data[key] = [float(v) for v in value]
    return data[key]


def _gain_matrix(data: dict, key: str, where: str,
                 default_linear: float, default_angular: float) -> np.ndarray:
    entry = data.setdefault(key, {})
    _require(isinstance(entry, dict), f"{where}.{key}",
             "must be {linear, angular}")
    lin = _number(entry, "linear", f"{where}.{key}", default=default_linear,
                  minimum=0.0)
    ang = _number(entry, "angular", f"{where}.{key}", default=default_angular,
                  minimum=0.0)
    return np.diag([lin] * 3 + [ang] * 3)


def _pose(data: dict, key: str, where: str) -> Pose:
    entry = data.setdefault(key, {})
    position = _vector(entry, "position", f"{where}.{key}", 3,
                       default=[0.0, 0.0, 0.0])
    quat = _vector(entry, "orientation", f"{where}.{key}", 4,
                   default=[1.0, 0.0, 0.0, 0.0])
    try:
        return Pose(np.array(position), quat_normalize(np.array(quat)))
    except ValueError as exc:
        raise ScenarioError(f"{where}.{key}: {exc}") from None


@dataclass
class Scenario:
    """Validated scene description with all defaults echoed."""

    data: dict
    base_dir: Path | None = None

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def has_planner(self) -> bool:
        return "agents" in self.data

    @property
    def has_dynamics(self) -> bool:
        return "dynamics" in self.data

    # -- planner side -----------------------------------------------------

    def build_figure(self):
        fig = self.data["figure"]
        limits = fig["head_limits_deg"]
        carried = None
        if "carried_box" in fig:
            carried = (fig["carried_box"]["center"], fig["carried_box"]["size"])
        figure = manikin_figure(
            trunk_size=tuple(fig["trunk_size"]),
            eye_forward=fig["eye_forward"], eye_up=fig["eye_up"],
            pitch_limits=tuple(np.radians(limits["pitch"])),
            roll_limits=tuple(np.radians(limits["roll"])),
            yaw_limits=tuple(np.radians(limits["yaw"])),
            carried_box=carried)
        config = Configuration(np.array(fig["base"]),
                               np.radians(np.array(fig["head_deg"])))
        return figure, config.clamped(figure)

    def build_obstacles(self) -> list[Obstacle]:
        obstacles = []
        for entry in self.data.get("obstacles", []):
            pose = _pose(entry, "pose", f"obstacles[{entry['name']}]")
            if "box" in entry:
                mesh = TriMesh.box(entry["box"]["center"], entry["box"]["size"])
            elif "mesh" in entry:
                mesh = TriMesh(np.array(entry["mesh"]["vertices"]),
                               np.array(entry["mesh"]["triangles"]))
            else:
                path = Path(entry["mesh_file"])
                if not path.is_absolute() and self.base_dir is not None:
                    path = self.base_dir / path
                mesh = load_mesh_text(path)
            obstacles.append(Obstacle(entry["name"], mesh, pose))
        return obstacles

    def build_target(self) -> Target:
        t = self.data["target"]
        return Target(np.array(t["position"]), np.array(t["direction"]))

    def build_agents(self) -> list[AgentSpec]:
        agents = []
        for entry in self.data["agents"]:
            agents.append(AgentSpec(
                id=entry["id"], kind=entry["kind"], rate=entry["rate"],
                active=entry["active"], gain=entry["gain"],
                delta_pos=entry.get("delta_pos"),
                delta_or=entry.get("delta_or"),
                params=dict(entry.get("params", {}))))
        return agents

    def build_params(self) -> PlannerParams:
        p = dict(self.data["planner"])
        p["cone_facets"] = self.data["cone"]["facets"]
        return PlannerParams(**p)

    def build_cone(self, state_apex, state_axis) -> VisionCone:
        c = self.data["cone"]
        return VisionCone(
            state_apex, state_axis,
            half_angle=np.radians(c["half_angle_deg"]),
            range=1.0,
            min_half_angle=np.radians(c["min_deg"]),
            max_half_angle=np.radians(c["max_deg"]),
            widen_step=np.radians(c["step_deg"]))

    def build_planner(self, operator_trace=None) -> Planner:
        from .kinematics import eye_pose, forward_kinematics, vision_axis

        _require(self.has_planner, "agents", "scenario has no agent roster")
        figure, config = self.build_figure()
        world = World(figure, self.build_obstacles())
        target = self.build_target()
        poses = forward_kinematics(figure, config)
        eye = eye_pose(figure, poses)
        cone = self.build_cone(eye.position, vision_axis(figure, poses))
        return Planner(world, config, target, self.build_agents(),
                       self.build_params(), cone=cone,
                       operator_trace=operator_trace)

    # -- dynamics side -------------------------------------------------------

    def build_simulation(self, mocap: MocapTrajectory | None = None,
                         guides_enabled: bool = True,
                         dt: float | None = None) -> Simulation:
        _require(self.has_dynamics, "dynamics", "scenario has no dynamics block")
        dyn = self.data["dynamics"]
        settings = SimulationSettings(
            dt=dt if dt is not None else dyn["dt"],
            stabilization=dyn["stabilization"],
            activation_margin=dyn["activation_margin"],
            pgs_tol=dyn["pgs_tol"], pgs_max_iter=dyn["pgs_max_iter"],
            budget_sq=dyn["budget_sq"])
        bodies = []
        bindings = []
        for entry in dyn["bodies"]:
            damping = _gain_matrix(entry, "damping", "dynamics.bodies",
                                   40.0, 2.0)
            pose = _pose(entry, "pose", f"dynamics.bodies[{entry['name']}]")
            bodies.append(RigidBody(entry["name"], pose, damping,
                                    skin=np.array(entry.get("skin", []))
                                    .reshape(-1, 3)))
            for port in entry.get("ports", []):
                stiffness = _gain_matrix(port, "stiffness",
                                         "dynamics.ports", 400.0, 20.0)
                damping_p = _gain_matrix(port, "damping", "dynamics.ports",
                                         0.0, 0.0)
                target = _pose(port, "target",
                               f"dynamics.bodies[{entry['name']}].ports") \
                    if port.get("capture_point") is None else pose
                task = TaskPort(port["name"], entry["name"], stiffness,
                                damping_p, target,
                                offset=_pose(port, "offset",
                                             "dynamics.ports"))
                bindings.append(PortBinding(task, port.get("capture_point")))
        guides = []
        for entry in dyn.get("guides", []):
            stiffness = _gain_matrix(entry, "stiffness", "dynamics.guides",
                                     1000.0, 50.0)
            damping_g = _gain_matrix(entry, "damping", "dynamics.guides",
                                     20.0, 4.0)
            if not guides_enabled:
                stiffness = np.zeros((6, 6))
                damping_g = np.zeros((6, 6))
            mech = VirtualMechanism(
                entry["name"], anchor=np.array(entry["anchor"]),
                axis=np.array(entry["axis"]),
                orientation=quat_normalize(np.array(entry["orientation"])),
                slide_damping=entry["slide_damping"],
                stiffness=stiffness, damping=damping_g,
                tool_axis=np.array(entry["tool_axis"]),
                slide_locked=entry["slide_locked"])
            guides.append(GuideBinding(mech, entry["body"],
                                       _pose(entry, "offset",
                                             "dynamics.guides")))
        contacts = []
        for entry in dyn.get("contacts", []):
            if "halfspace" in entry:
                contacts.append(HalfSpace(entry["halfspace"]["normal"],
                                          entry["halfspace"]["offset"],
                                          name=entry["name"]))
            elif "sphere" in entry:
                contacts.append(SphereObstacle(entry["sphere"]["center"],
                                               entry["sphere"]["radius"],
                                               name=entry["name"]))
            else:
                contacts.append(BoxObstacle(entry["box"]["center"],
                                            entry["box"]["half_extents"],
                                            name=entry["name"]))
        return Simulation(bodies, bindings, guides, contacts, settings,
                          mocap=mocap)


def _normalize_figure(data: dict) -> None:
    fig = data.setdefault("figure", {})
    _vector(fig, "trunk_size", "figure", 3, default=[0.4, 0.3, 1.5])
    _number(fig, "eye_forward", "figure", default=0.1)
    _number(fig, "eye_up", "figure", default=0.1)
    limits = fig.setdefault("head_limits_deg", {})
    _vector(limits, "pitch", "figure.head_limits_deg", 2, default=[-40.0, 35.0])
    _vector(limits, "roll", "figure.head_limits_deg", 2, default=[-40.0, 40.0])
    _vector(limits, "yaw", "figure.head_limits_deg", 2, default=[-70.0, 70.0])
    for key in ("pitch", "roll", "yaw"):
        _require(limits[key][0] <= limits[key][1],
                 f"figure.head_limits_deg.{key}", "limits out of order")
    _vector(fig, "base", "figure", 3, default=[0.0, 0.0, 0.0])
    _vector(fig, "head_deg", "figure", 3, default=[0.0, 0.0, 0.0])
    if "carried_box" in fig:
        _vector(fig["carried_box"], "center", "figure.carried_box", 3)
        _vector(fig["carried_box"], "size", "figure.carried_box", 3)
        _require(all(v > 0 for v in fig["carried_box"]["size"]),
                 "figure.carried_box.size", "must be positive")


def _normalize_obstacles(data: dict) -> None:
    seen = set()
    for k, entry in enumerate(data.setdefault("obstacles", [])):
        where = f"obstacles[{k}]"
        _require(isinstance(entry, dict), where, "must be an object")
        _require("name" in entry, where, "missing name")
        _require(entry["name"] not in seen, where,
                 f"duplicate obstacle name {entry['name']!r}")
        seen.add(entry["name"])
        kinds = [key for key in ("box", "mesh", "mesh_file") if key in entry]
        _require(len(kinds) == 1, where,
                 "needs exactly one of box, mesh, mesh_file")
        if "box" in entry:
            _vector(entry["box"], "center", f"{where}.box", 3)
            _vector(entry["box"], "size", f"{where}.box", 3)
            _require(all(v > 0 for v in entry["box"]["size"]),
                     f"{where}.box.size", "must be positive")


def _normalize_agents(data: dict) -> None:
    if "agents" not in data:
        return
    agents = data["agents"]
    _require(isinstance(agents, list) and agents, "agents",
             "must be a non-empty list")
    ids = set()
    for k, entry in enumerate(agents):
        where = f"agents[{k}]"
        _require(isinstance(entry, dict), where, "must be an object")
        entry.setdefault("id", k)
        _require(entry["id"] not in ids, where, "duplicate agent id")
        ids.add(entry["id"])
        _require("kind" in entry, where, "missing kind")
        from .planner import AGENT_KINDS

        _require(entry["kind"] in AGENT_KINDS, f"{where}.kind",
                 f"unknown agent kind {entry['kind']!r}")
        rate = entry.setdefault("rate", 1)
        _require(isinstance(rate, int) and rate >= 1, f"{where}.rate",
                 "activity rate must be an integer >= 1")
        entry.setdefault("active", True)
        _number(entry, "gain", where, default=1.0, positive=True)
        for key in ("delta_pos", "delta_or"):
            if entry.get(key) is not None:
                _number(entry, key, where, positive=True)


def _normalize_planner(data: dict) -> None:
    planner = data.setdefault("planner", {})
    _number(planner, "delta_pos", "planner", default=0.01, positive=True)
    _number(planner, "delta_or", "planner", default=0.01, positive=True)
    _number(planner, "tol_pos", "planner", default=0.05, positive=True)
    _number(planner, "tol_or", "planner", default=0.05, positive=True)
    max_ticks = planner.setdefault("max_ticks", 100_000)
    _require(isinstance(max_ticks, int) and max_ticks >= 1,
             "planner.max_ticks", "must be an integer >= 1")
    window = planner.setdefault("stall_window", 200)
    _require(isinstance(window, int) and window >= 1,
             "planner.stall_window", "must be an integer >= 1")
    _number(planner, "stall_threshold", "planner",
            default=planner["delta_pos"] / 10.0, positive=True)
    _number(planner, "fd_step_pos", "planner", default=1e-3, positive=True)
    _number(planner, "fd_step_rot", "planner", default=1e-3, positive=True)
    cone = data.setdefault("cone", {})
    _number(cone, "half_angle_deg", "cone", default=2.0, positive=True)
    _number(cone, "min_deg", "cone", default=2.0, positive=True)
    _number(cone, "max_deg", "cone", default=30.0, positive=True)
    _number(cone, "step_deg", "cone", default=0.5, positive=True)
    facets = cone.setdefault("facets", 16)
    _require(isinstance(facets, int) and facets >= 8, "cone.facets",
             "must be an integer >= 8")
    _require(cone["min_deg"] <= cone["half_angle_deg"] <= cone["max_deg"],
             "cone.half_angle_deg", "must lie between min_deg and max_deg")


def _normalize_dynamics(data: dict) -> None:
    if "dynamics" not in data:
        return
    dyn = data["dynamics"]
    _number(dyn, "dt", "dynamics", default=0.004, positive=True)
    _number(dyn, "stabilization", "dynamics", default=50.0, minimum=0.0)
    _number(dyn, "activation_margin", "dynamics", default=0.005, positive=True)
    _number(dyn, "pgs_tol", "dynamics", default=1e-8, positive=True)
    max_iter = dyn.setdefault("pgs_max_iter", 200)
    _require(isinstance(max_iter, int) and max_iter >= 1,
             "dynamics.pgs_max_iter", "must be an integer >= 1")
    _number(dyn, "budget_sq", "dynamics", default=0.0, minimum=0.0)
    bodies = dyn.setdefault("bodies", [])
    names = set()
    for k, entry in enumerate(bodies):
        where = f"dynamics.bodies[{k}]"
        _require("name" in entry, where, "missing name")
        _require(entry["name"] not in names, where, "duplicate body name")
        names.add(entry["name"])
        entry.setdefault("skin", [])
        for p, port in enumerate(entry.setdefault("ports", [])):
            pwhere = f"{where}.ports[{p}]"
            _require("name" in port, pwhere, "missing name")
            port.setdefault("capture_point", None)
    for k, entry in enumerate(dyn.setdefault("guides", [])):
        where = f"dynamics.guides[{k}]"
        _require("name" in entry, where, "missing name")
        _require("body" in entry, where, "missing body")
        _require(entry["body"] in names, f"{where}.body",
                 f"unknown body {entry['body']!r}")
        _vector(entry, "anchor", where, 3)
        axis = _vector(entry, "axis", where, 3)
        _require(abs(np.linalg.norm(axis) - 1.0) < 1e-6, f"{where}.axis",
                 "must be a unit vector")
        _vector(entry, "orientation", where, 4, default=[1.0, 0, 0, 0])
        _vector(entry, "tool_axis", where, 3, default=[0.0, 0, 1])
        _number(entry, "slide_damping", where, default=5.0, minimum=0.0)
        entry.setdefault("slide_locked", False)
    for k, entry in enumerate(dyn.setdefault("contacts", [])):
        where = f"dynamics.contacts[{k}]"
        _require("name" in entry, where, "missing name")
        kinds = [key for key in ("halfspace", "sphere", "box") if key in entry]
        _require(len(kinds) == 1, where,
                 "needs exactly one of halfspace, sphere, box")


def normalize(data: dict) -> dict:
    _require(isinstance(data, dict), "scenario", "must be a JSON object")
    unknown = set(data) - TOP_LEVEL_KEYS
    _require(not unknown, "scenario", f"unknown top-level keys {sorted(unknown)}")
    version = data.setdefault("format", FORMAT_VERSION)
    _require(version == FORMAT_VERSION, "format",
             f"unsupported scenario format {version!r}")
    data.setdefault("name", "unnamed")
    data.setdefault("seed", 0)
    _normalize_figure(data)
    _normalize_obstacles(data)
    _normalize_agents(data)
    if "agents" in data:
        _require("target" in data, "target",
                 "a planner scenario needs a target")
    if "target" in data:
        target = data["target"]
        _vector(target, "position", "target", 3)
        direction = _vector(target, "direction", "target", 3)
        _require(np.linalg.norm(direction) > 0, "target.direction",
                 "must be nonzero")
    _normalize_planner(data)
    _normalize_dynamics(data)
    return data


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    scenario = Scenario(normalize(raw), base_dir=path.parent)
    scenario.build_obstacles()   # resolve meshes now so errors surface early
    if scenario.has_planner:
        scenario.build_agents()
        scenario.build_params()
    return scenario


def loads_scenario(text: str, base_dir: Path | None = None) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno}: {exc.msg}") from None
    return Scenario(normalize(raw), base_dir=base_dir)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.data, indent=2,
                                     sort_keys=True) + "\n")
