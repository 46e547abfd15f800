"""Motion-capture-driven simulation: free rigid bodies under damped-spring
task ports, passive virtual guides as extra ports over the extended
coordinates, and unilateral contacts solved each step as an LCP."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import (
    EnergyLedger,
    ResolvedPort,
    TaskPort,
    coupled_assemble,
    integrate_pose,
)
from .guides import VirtualMechanism, axis_error
from .lcp import (
    DEFAULT_ACTIVATION_MARGIN,
    DEFAULT_PGS_MAX_ITER,
    DEFAULT_PGS_TOL,
    UnilateralConstraint,
    apply_constraints,
    assemble_lcp,
    solve_lcp_pgs,
)
from .mocap import MocapTrajectory
from .runlog import RunLog
from .transforms import Pose, pose_error, skew


@dataclass(eq=False)
class RigidBody:
    """Free 6-DOF body under first-order damping; skin sample points feed
    the contact generator."""

    name: str
    pose: Pose
    damping: np.ndarray                       # 6x6
    skin: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.damping = np.asarray(self.damping, dtype=float).reshape(6, 6)
        self.skin = np.asarray(self.skin, dtype=float).reshape(-1, 3)


@dataclass(eq=False)
class PortBinding:
    """A task port on a body, optionally tracking a capture point."""

    port: TaskPort
    capture_point: str | None = None   # None: hold the configured target


@dataclass(eq=False)
class GuideBinding:
    mechanism: VirtualMechanism
    body: str
    offset: Pose = field(default_factory=Pose.identity)


@dataclass
class SimulationSettings:
    dt: float = 0.004
    stabilization: float = 50.0            # contact bias gain (1/s)
    activation_margin: float = DEFAULT_ACTIVATION_MARGIN
    pgs_tol: float = DEFAULT_PGS_TOL
    pgs_max_iter: int = DEFAULT_PGS_MAX_ITER
    budget_sq: float = 0.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


class Simulation:
    """Single-threaded stepping context over bodies + guide mechanisms."""

    def __init__(self, bodies: list[RigidBody], ports: list[PortBinding],
                 guides: list[GuideBinding], obstacles: list,
                 settings: SimulationSettings,
                 mocap: MocapTrajectory | None = None):
        self.bodies = {b.name: b for b in bodies}
        if len(self.bodies) != len(bodies):
            raise ValueError("duplicate body names")
        self.ports = ports
        self.guides = guides
        self.obstacles = obstacles
        self.settings = settings
        self.mocap = mocap
        self.time = 0.0
        self.tick = 0
        self.ledger = EnergyLedger(settings.budget_sq)
        self.log = RunLog()

        self._body_offset: dict[str, int] = {}
        offset = 0
        for body in bodies:
            self._body_offset[body.name] = offset
            offset += 6
        self._guide_offset: dict[int, int | None] = {}
        for k, guide in enumerate(guides):
            if guide.body not in self.bodies:
                raise ValueError(f"guide {guide.mechanism.name!r} references "
                                 f"unknown body {guide.body!r}")
            if guide.mechanism.slide_locked:
                self._guide_offset[k] = None
            else:
                self._guide_offset[k] = offset
                offset += 1
        self.n_coords = offset
        self._damping = np.zeros((offset, offset))
        for body in bodies:
            i = self._body_offset[body.name]
            self._damping[i:i + 6, i:i + 6] = body.damping
        for k, guide in enumerate(guides):
            j = self._guide_offset[k]
            if j is not None:
                self._damping[j, j] = guide.mechanism.slide_damping

    # -- kinematics over the generalized coordinates ------------------------

    def frame_jacobian(self, body: RigidBody, point_world: np.ndarray
                       ) -> np.ndarray:
        J = np.zeros((6, self.n_coords))
        i = self._body_offset[body.name]
        r = point_world - body.pose.position
        J[:3, i:i + 3] = np.eye(3)
        J[:3, i + 3:i + 6] = -skew(r)
        J[3:, i + 3:i + 6] = np.eye(3)
        return J

    def _resolve_ports(self) -> list[ResolvedPort]:
        resolved = []
        for binding in self.ports:
            port = binding.port
            body = self.bodies[port.frame]
            frame_pose = body.pose.compose(port.offset)
            target, target_twist = port.target, port.target_twist
            if binding.capture_point is not None:
                if self.mocap is None:
                    raise ValueError("port tracks a capture point but no "
                                     "trajectory is loaded")
                target, target_twist = self.mocap.sample(binding.capture_point,
                                                         self.time)
            J = self.frame_jacobian(body, frame_pose.position)
            resolved.append(ResolvedPort(port.name, J, port.stiffness,
                                         port.damping,
                                         pose_error(target, frame_pose),
                                         target_twist))
        for k, guide in enumerate(self.guides):
            mech = guide.mechanism
            body = self.bodies[guide.body]
            frame_pose = body.pose.compose(guide.offset)
            J = self.frame_jacobian(body, frame_pose.position)
            j = self._guide_offset[k]
            if j is not None:
                J = J.copy()
                J[:3, j] -= mech.axis      # relative twist: frame minus slide
            resolved.append(ResolvedPort(f"guide:{mech.name}", J,
                                         mech.stiffness, mech.damping,
                                         pose_error(mech.pose(), frame_pose),
                                         np.zeros(6)))
        return resolved

    def _contact_constraints(self) -> tuple[list[UnilateralConstraint], float]:
        constraints = []
        min_gap = np.inf
        for body in self.bodies.values():
            if body.skin.size == 0:
                continue
            points = body.pose.transform_points(body.skin)
            for p_idx, point in enumerate(points):
                J_point = self.frame_jacobian(body, point)[:3]
                for obstacle in self.obstacles:
                    gap, normal = obstacle.gap_normal(point)
                    min_gap = min(min_gap, gap)
                    row = normal @ J_point
                    constraints.append(UnilateralConstraint(
                        "contact", gap, row, self.settings.stabilization,
                        name=f"{body.name}[{p_idx}]:{obstacle.name}"))
        return constraints, (float(min_gap) if np.isfinite(min_gap) else np.nan)

    # -- stepping ------------------------------------------------------------

    def step(self) -> dict:
        settings = self.settings
        ports = self._resolve_ports()
        system, torque = coupled_assemble(self._damping, ports)
        constraints, min_gap = self._contact_constraints()
        problem = assemble_lcp(system, torque, constraints, settings.dt,
                               settings.activation_margin)
        solution = solve_lcp_pgs(problem, settings.pgs_tol,
                                 settings.pgs_max_iter)
        qdot = apply_constraints(system, torque, solution.lam,
                                 problem.constraints)

        port_powers = {}
        for port in ports:
            velocity = port.jacobian @ qdot
            wrench = (port.stiffness @ port.error
                      + port.damping @ (port.target_twist - velocity))
            port_powers[port.name] = float(wrench @ velocity)
        self.ledger.add_sample(port_powers,
                               float(qdot @ self._damping @ qdot), settings.dt)

        for body in self.bodies.values():
            i = self._body_offset[body.name]
            body.pose = integrate_pose(body.pose, qdot[i:i + 6], settings.dt)
        for k, guide in enumerate(self.guides):
            j = self._guide_offset[k]
            if j is not None:
                guide.mechanism.rate = float(qdot[j])
                guide.mechanism.state += guide.mechanism.rate * settings.dt

        self.time += settings.dt
        self.tick += 1
        record = {
            "tick": self.tick,
            "t": self.time,
            "bodies": {
                name: {"position": [float(v) for v in b.pose.position],
                       "orientation": [float(v) for v in b.pose.orientation]}
                for name, b in self.bodies.items()},
            "min_gap": None if np.isnan(min_gap) else min_gap,
            "ledger": {k: float(v) for k, v in self.ledger.snapshot().items()},
            "dissipation": self.ledger.dissipation,
            "port_power": port_powers,
            "lcp": {"size": problem.size, "iterations": solution.iterations,
                    "converged": solution.converged,
                    "residual": solution.residual},
        }
        errors = {}
        for guide in self.guides:
            body = self.bodies[guide.body]
            frame_pose = body.pose.compose(guide.offset)
            errors[guide.mechanism.name] = axis_error(frame_pose,
                                                      guide.mechanism)
        if len(errors) == 1:
            record["axis_error"] = next(iter(errors.values()))
        elif errors:
            record["axis_errors"] = errors
        self.log.append(record)
        return record

    def run(self, duration: float | None = None, steps: int | None = None
            ) -> RunLog:
        if steps is None:
            if duration is None:
                if self.mocap is None:
                    raise ValueError("need a duration, a step count, or a "
                                     "capture trajectory")
                duration = self.mocap.duration
            steps = int(round(duration / self.settings.dt))
        for _ in range(steps):
            self.step()
        return self.log
