"""First-order damped dynamics with task-space damped-spring control.

Velocities come from the closed-form coupled solve; orientations advance
by the exponential map. The passivity side: an energy ledger per port,
the null-space projector, the witness showing prioritizing projections
can extract energy, and the internal-torque analysis showing why the
external port stays safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transforms import Pose, pose_error, quat_from_rotvec, quat_multiply

CONDITION_LIMIT = 1e12
SINGULAR_MESSAGE = ("coupled system is singular: the joint damping matrix "
                    "must be positive definite, or every port Jacobian must "
                    "have full rank with positive definite port damping")


class SingularCoupledSystemError(np.linalg.LinAlgError):
    pass


def _check_spd_like(name: str, matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.abs(matrix - matrix.T).max(initial=0.0) > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    if matrix.size and np.linalg.eigvalsh(matrix).min() < -1e-12:
        raise ValueError(f"{name} must be positive semi-definite")
    return matrix


@dataclass(eq=False)
class DampingModel:
    """Joint-space damping of the first-order plant (damping * qdot = torque)."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = _check_spd_like("damping matrix", self.matrix)

    @staticmethod
    def isotropic(n: int, value: float) -> "DampingModel":
        return DampingModel(np.eye(n) * value)


@dataclass(eq=False)
class TaskPort:
    """A controlled frame: damped spring toward a target pose/twist."""

    name: str
    frame: str
    stiffness: np.ndarray            # 6x6
    damping: np.ndarray              # 6x6
    target: Pose
    target_twist: np.ndarray = field(default_factory=lambda: np.zeros(6))
    offset: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        self.stiffness = _check_spd_like("port stiffness", self.stiffness)
        self.damping = _check_spd_like("port damping", self.damping)
        self.target_twist = np.asarray(self.target_twist, dtype=float).reshape(6)


def pd_wrench(port: TaskPort, pose: Pose, twist: np.ndarray) -> np.ndarray:
    """Damped-spring wrench: stiffness on the pose error plus damping on
    the twist error."""
    err = pose_error(port.target, pose)
    return port.stiffness @ err + port.damping @ (port.target_twist
                                                  - np.asarray(twist, dtype=float))


@dataclass(eq=False)
class ResolvedPort:
    """A port evaluated against the current state: its Jacobian over the
    generalized velocity coordinates, pose error, and feedforward twist."""

    name: str
    jacobian: np.ndarray       # (k, n)
    stiffness: np.ndarray      # (k, k)
    damping: np.ndarray        # (k, k)
    error: np.ndarray          # (k,)
    target_twist: np.ndarray   # (k,)

    def __post_init__(self):
        self.jacobian = np.atleast_2d(np.asarray(self.jacobian, dtype=float))
        k = self.jacobian.shape[0]
        self.stiffness = np.asarray(self.stiffness, dtype=float).reshape(k, k)
        self.damping = np.asarray(self.damping, dtype=float).reshape(k, k)
        self.error = np.asarray(self.error, dtype=float).reshape(k)
        self.target_twist = np.asarray(self.target_twist, dtype=float).reshape(k)


def coupled_assemble(damping, ports) -> tuple[np.ndarray, np.ndarray]:
    B = damping.matrix if isinstance(damping, DampingModel) else np.asarray(damping)
    system = B.astype(float).copy()
    rhs = np.zeros(B.shape[0])
    for port in ports:
        J = port.jacobian
        system += J.T @ port.damping @ J
        rhs += J.T @ (port.stiffness @ port.error
                      + port.damping @ port.target_twist)
    return system, rhs


def coupled_velocity(damping, ports) -> np.ndarray:
    """Closed-form generalized velocity of the damped plant under all
    port springs, with the port damping taken implicitly."""
    system, rhs = coupled_assemble(damping, ports)
    if np.linalg.cond(system) >= CONDITION_LIMIT:
        raise SingularCoupledSystemError(SINGULAR_MESSAGE)
    return np.linalg.solve(system, rhs)


def integrate_pose(pose: Pose, twist: np.ndarray, dt: float) -> Pose:
    """First-order Lie step: translate, then rotate by the exponential
    map of the world angular velocity."""
    twist = np.asarray(twist, dtype=float).reshape(6)
    position = pose.position + twist[:3] * dt
    orientation = quat_multiply(quat_from_rotvec(twist[3:] * dt),
                                pose.orientation)
    return Pose(position, orientation)


class EnergyLedger:
    """Trapezoidal per-port energy bookkeeping against a passivity budget."""

    def __init__(self, budget_sq: float = 0.0):
        self.budget_sq = float(budget_sq)
        self.port_work: dict[str, float] = {}
        self.dissipation = 0.0
        self._prev_powers: dict[str, float] = {}
        self._prev_dissipation: float | None = None

    def add_sample(self, port_powers: dict[str, float],
                   dissipation_power: float, dt: float) -> None:
        for name, power in port_powers.items():
            prev = self._prev_powers.get(name, power)
            self.port_work[name] = (self.port_work.get(name, 0.0)
                                    + 0.5 * (prev + power) * dt)
            self._prev_powers[name] = power
        prev = (dissipation_power if self._prev_dissipation is None
                else self._prev_dissipation)
        self.dissipation += 0.5 * (prev + dissipation_power) * dt
        self._prev_dissipation = dissipation_power
        if self.dissipation < -1e-9:
            raise ValueError("dissipation became negative: plant damping "
                             "is not positive semi-definite")

    def total_work(self) -> float:
        return sum(self.port_work.values())

    def snapshot(self) -> dict[str, float]:
        return dict(self.port_work)


@dataclass
class PassivityReport:
    passed: bool
    deficit: float   # energy missing below the budget, 0 when passing


def passivity_check(ledger: EnergyLedger,
                    port: str | None = None) -> PassivityReport:
    """A port (or the whole ledger) passes while its cumulative work has
    not dipped below the allowed initial-energy budget."""
    work = ledger.total_work() if port is None else ledger.port_work.get(port, 0.0)
    bound = -ledger.budget_sq - 1e-9
    if work >= bound:
        return PassivityReport(True, 0.0)
    return PassivityReport(False, bound - work)


# --- projections and the passivity analysis ---------------------------------


def nullspace_projector(task_jacobian: np.ndarray,
                        damping) -> np.ndarray:
    """Orthogonal projector onto Ker(J B^-1): internal torques filtered
    through it cannot disturb the external task velocity."""
    B = damping.matrix if isinstance(damping, DampingModel) else np.asarray(damping)
    if np.linalg.cond(B) >= CONDITION_LIMIT:
        raise np.linalg.LinAlgError("joint damping matrix is singular")
    J = np.atleast_2d(np.asarray(task_jacobian, dtype=float))
    A = J @ np.linalg.inv(B)
    return np.eye(A.shape[1]) - np.linalg.pinv(A) @ A


@dataclass(eq=False)
class ProjectionWitness:
    """A concrete two-port loading under the prioritized projection law
    whose instantaneous net port power is negative: the projection can
    extract unbounded energy if held."""

    first_wrench: np.ndarray
    second_wrench: float
    second_jacobian: np.ndarray
    power: float
    qdot: np.ndarray
    first_velocity: np.ndarray
    second_velocity: float
    coupling_norm: float        # |J2^T W2|, must be nonzero
    balance_residual: float     # |J1^T W1 + 0.5 J2^T W2|
    masking_residual: float     # |J2 B^-1 P J2^T|


def projection_passivity_witness(task_jacobian: np.ndarray, damping,
                                 load: float = 2.0) -> ProjectionWitness:
    """Builds the second port along a row of the task Jacobian: the
    projector then masks it completely while the balance condition feeds
    it, so the prioritized torque does net negative work on the pair."""
    B = damping.matrix if isinstance(damping, DampingModel) else np.asarray(damping)
    J1 = np.atleast_2d(np.asarray(task_jacobian, dtype=float))
    n = J1.shape[1]
    if n < 2:
        raise ValueError("witness needs at least two DOFs")
    rows = np.linalg.norm(J1, axis=1)
    if rows.max() < 1e-12:
        raise ValueError("witness search failed: task Jacobian is zero")
    pick = int(np.argmax(rows))
    w = np.zeros(J1.shape[0])
    w[pick] = 1.0
    v = J1.T @ w                     # second port direction, in Range(J1^T)
    w2 = float(load)
    w1 = -0.5 * w2 * w               # solves J1^T w1 = -0.5 * v * w2 exactly
    j2 = v[None, :]

    projector = nullspace_projector(J1, B)
    B_inv = np.linalg.inv(B)
    torque = J1.T @ w1 + projector @ (j2.T @ np.array([w2]))
    qdot = B_inv @ torque
    v1 = J1 @ qdot
    v2 = float((j2 @ qdot)[0])
    power = float(w1 @ v1 + w2 * v2)
    return ProjectionWitness(
        first_wrench=w1,
        second_wrench=w2,
        second_jacobian=j2,
        power=power,
        qdot=qdot,
        first_velocity=v1,
        second_velocity=v2,
        coupling_norm=float(np.linalg.norm(j2.T * w2)),
        balance_residual=float(np.linalg.norm(J1.T @ w1 + 0.5 * j2.T @ np.array([w2]))),
        masking_residual=float(np.abs(j2 @ B_inv @ projector @ j2.T).max()),
    )


def internal_torque(potential_gradient: np.ndarray, projector: np.ndarray,
                    alpha: float) -> np.ndarray:
    """Joint torques of an internal potential, filtered through the
    external task's null-space projector and scaled down by alpha."""
    if alpha < 0.0:
        raise ValueError("alpha must be non-negative")
    grad = np.asarray(potential_gradient, dtype=float)
    return -alpha * np.asarray(projector) @ grad


def external_port_power(task_jacobian: np.ndarray, damping,
                        wrench: np.ndarray) -> float:
    """Quadratic form of the external port under its own wrench; it is
    non-negative whenever the plant damping is, so a properly projected
    internal torque cannot break passivity there."""
    B = damping.matrix if isinstance(damping, DampingModel) else np.asarray(damping)
    J1 = np.atleast_2d(np.asarray(task_jacobian, dtype=float))
    w = np.asarray(wrench, dtype=float).reshape(J1.shape[0])
    return float(w @ J1 @ np.linalg.inv(B) @ J1.T @ w)


@dataclass
class InternalPortReport:
    external_power: float       # the quadratic form, >= 0
    task_disturbance: float     # |J1 B^-1 gamma_int|, ~0 for a true projector


def internal_port_report(task_jacobian: np.ndarray, damping,
                         wrench: np.ndarray,
                         gamma_int: np.ndarray) -> InternalPortReport:
    B = damping.matrix if isinstance(damping, DampingModel) else np.asarray(damping)
    J1 = np.atleast_2d(np.asarray(task_jacobian, dtype=float))
    disturbance = float(np.linalg.norm(
        J1 @ np.linalg.inv(B) @ np.asarray(gamma_int, dtype=float)))
    return InternalPortReport(external_port_power(task_jacobian, B, wrench),
                              disturbance)
