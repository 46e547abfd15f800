"""Unilateral constraints (joint limits, point contacts) assembled at the
velocity level into a linear complementarity problem and solved by
projected Gauss-Seidel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

JOINT_LIMIT_LO = "joint_limit_lo"
JOINT_LIMIT_HI = "joint_limit_hi"
CONTACT = "contact"
CONSTRAINT_KINDS = (JOINT_LIMIT_LO, JOINT_LIMIT_HI, CONTACT)

DEFAULT_ACTIVATION_MARGIN = 0.005   # m (or rad) of remaining gap
DEFAULT_PGS_TOL = 1e-8
DEFAULT_PGS_MAX_ITER = 200


@dataclass(eq=False)
class UnilateralConstraint:
    """One non-penetration row: gap >= 0 is satisfied, the Jacobian row
    maps generalized velocity to gap rate. Contacts are inelastic."""

    kind: str
    gap: float
    jacobian: np.ndarray
    stabilization: float = 0.0    # 1/s, Baumgarte-style bias gain
    name: str = ""
    restitution: float = 0.0

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        self.jacobian = np.asarray(self.jacobian, dtype=float).ravel()
        if not np.isfinite(self.gap):
            raise ValueError("constraint gap must be finite")
        if np.linalg.norm(self.jacobian) == 0.0:
            raise ValueError("constraint row must be nonzero")
        if self.restitution != 0.0:
            raise ValueError("only inelastic (zero restitution) contacts")


@dataclass(eq=False)
class LCPProblem:
    """0 <= lam  perp  M lam + b >= 0, with M = J B^-1 J^T."""

    M: np.ndarray
    b: np.ndarray
    constraints: list[UnilateralConstraint] = field(default_factory=list)

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.M.shape != (self.b.size, self.b.size):
            raise ValueError("M and b sizes disagree")
        if self.M.size:
            if np.abs(self.M - self.M.T).max() > 1e-9:
                raise ValueError("M must be symmetric")
            if np.linalg.eigvalsh(self.M).min() < -1e-9:
                raise ValueError("M must be positive semi-definite")

    @property
    def size(self) -> int:
        return self.b.size


def assemble_lcp(damping, torque, constraints, dt: float,
                 activation_margin: float = DEFAULT_ACTIVATION_MARGIN
                 ) -> LCPProblem:
    """Velocity-level assembly over the near-active constraints: the bias
    term pushes any existing penetration out over the step."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    B = damping.matrix if hasattr(damping, "matrix") else np.asarray(damping)
    active = [c for c in constraints if c.gap <= activation_margin]
    if not active:
        return LCPProblem(np.zeros((0, 0)), np.zeros(0), [])
    J = np.vstack([c.jacobian for c in active])
    BiJt = np.linalg.solve(B, J.T)
    M = J @ BiJt
    # stabilization is a rate (1/s): existing penetration is recovered at
    # stabilization * depth per second
    bias = np.array([c.stabilization * min(c.gap, 0.0) for c in active])
    b = J @ np.linalg.solve(B, np.asarray(torque, dtype=float)) + bias
    return LCPProblem(M, b, active)


@dataclass
class LCPSolution:
    lam: np.ndarray
    converged: bool
    iterations: int
    residual: float


def lcp_residual(M: np.ndarray, b: np.ndarray, lam: np.ndarray) -> float:
    """Worst violation of 0 <= lam perp M lam + b >= 0."""
    if lam.size == 0:
        return 0.0
    w = M @ lam + b
    return float(max(np.max(-w, initial=0.0), np.max(-lam, initial=0.0),
                     np.abs(lam * w).max(initial=0.0)))


def solve_lcp_pgs(problem: LCPProblem, tol: float = DEFAULT_PGS_TOL,
                  max_iter: int = DEFAULT_PGS_MAX_ITER) -> LCPSolution:
    """Projected Gauss-Seidel sweeps; on non-convergence the residual is
    reported so the caller can accept it or shrink the step."""
    M, b = problem.M, problem.b
    lam = np.zeros(problem.size)
    if problem.size == 0:
        return LCPSolution(lam, True, 0, 0.0)
    diag = np.diag(M)
    for iteration in range(1, max_iter + 1):
        for i in range(problem.size):
            if diag[i] <= 1e-14:
                continue
            w_i = M[i] @ lam + b[i]
            lam[i] = max(0.0, lam[i] - w_i / diag[i])
        residual = lcp_residual(M, b, lam)
        if residual <= tol:
            return LCPSolution(lam, True, iteration, residual)
    return LCPSolution(lam, False, max_iter, lcp_residual(M, b, lam))


def apply_constraints(damping, torque, lam: np.ndarray,
                      constraints) -> np.ndarray:
    """Corrected generalized velocity under the solved constraint
    impulses."""
    B = damping.matrix if hasattr(damping, "matrix") else np.asarray(damping)
    torque = np.asarray(torque, dtype=float).copy()
    for value, constraint in zip(np.asarray(lam, dtype=float), constraints):
        torque += constraint.jacobian * value
    return np.linalg.solve(B, torque)


# --- contact primitives -----------------------------------------------------

@dataclass(eq=False)
class HalfSpace:
    """All points with normal . p >= offset are outside."""

    normal: np.ndarray
    offset: float
    name: str = "halfspace"

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise ValueError("half-space normal must be nonzero")
        self.normal = n / norm

    def gap_normal(self, point: np.ndarray) -> tuple[float, np.ndarray]:
        return float(self.normal @ point - self.offset), self.normal


@dataclass(eq=False)
class SphereObstacle:
    center: np.ndarray
    radius: float
    name: str = "sphere"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        if self.radius <= 0.0:
            raise ValueError("sphere radius must be positive")

    def gap_normal(self, point: np.ndarray) -> tuple[float, np.ndarray]:
        rel = point - self.center
        dist = float(np.linalg.norm(rel))
        if dist < 1e-12:
            return -self.radius, np.array([0.0, 0.0, 1.0])
        return dist - self.radius, rel / dist


@dataclass(eq=False)
class BoxObstacle:
    """Axis-aligned box; gap is the signed distance of a point."""

    center: np.ndarray
    half_extents: np.ndarray
    name: str = "box"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.half_extents = np.asarray(self.half_extents, dtype=float).reshape(3)
        if np.any(self.half_extents <= 0.0):
            raise ValueError("box half extents must be positive")

    def gap_normal(self, point: np.ndarray) -> tuple[float, np.ndarray]:
        rel = point - self.center
        q = np.abs(rel) - self.half_extents
        if np.all(q <= 0.0):  # inside: exit along the least-penetrated axis
            axis = int(np.argmax(q))
            normal = np.zeros(3)
            normal[axis] = np.sign(rel[axis]) or 1.0
            return float(q[axis]), normal
        outside = np.maximum(q, 0.0)
        dist = float(np.linalg.norm(outside))
        normal = np.sign(rel) * outside / dist
        return dist, normal
