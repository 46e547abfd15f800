"""Triangle-mesh world geometry.

Provides the collision-line-length criterion (total length of the
intersection curves between two meshed surfaces), its finite-difference
gradient over figure DOFs, segment occlusion tests, and the adaptive
vision cone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import ArticulatedFigure, Configuration, forward_kinematics
from .transforms import Pose, angle_between, cross3, vec3

DEGENERATE_AREA_TOL = 1e-12
SEGMENT_LENGTH_TOL = 1e-12
PARALLEL_TOL = 1e-9
OCCLUSION_PARAM_TOL = 1e-9

FD_STEP_POS = 1e-3   # m
FD_STEP_ROT = 1e-3   # rad


@dataclass
class TriMesh:
    """Indexed triangle surface; vertices in a local frame."""

    vertices: np.ndarray   # (n, 3) float
    triangles: np.ndarray  # (m, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")
        areas = self.triangle_areas()
        if np.any(areas < DEGENERATE_AREA_TOL):
            bad = int(np.argmin(areas))
            raise ValueError(f"triangle {bad} is degenerate (area {areas[bad]:.3e})")

    @staticmethod
    def unchecked(vertices: np.ndarray, triangles: np.ndarray) -> "TriMesh":
        """Construction-by-formula fast path (no validation pass)."""
        mesh = object.__new__(TriMesh)
        mesh.vertices = vertices
        mesh.triangles = triangles
        return mesh

    def triangle_areas(self, vertices: np.ndarray | None = None) -> np.ndarray:
        v = self.vertices if vertices is None else vertices
        a, b, c = (v[self.triangles[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(cross3(b - a, c - a), axis=1)

    def transformed(self, pose: Pose) -> np.ndarray:
        """World-space vertex array."""
        return pose.transform_points(self.vertices)

    @staticmethod
    def box(center, size) -> "TriMesh":
        cx, cy, cz = np.asarray(center, dtype=float)
        hx, hy, hz = np.asarray(size, dtype=float) / 2.0
        verts = np.array([[cx + sx * hx, cy + sy * hy, cz + sz * hz]
                          for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)])
        # vertex index = x_bit + 2*y_bit + 4*z_bit
        quads = [
            (0, 1, 3, 2),  # z-
            (4, 6, 7, 5),  # z+
            (0, 2, 6, 4),  # x-
            (1, 5, 7, 3),  # x+
            (0, 4, 5, 1),  # y-
            (2, 3, 7, 6),  # y+
        ]
        tris = []
        for a, b, c, d in quads:
            tris.append((a, b, c))
            tris.append((a, c, d))
        return TriMesh(verts, np.array(tris))


def load_mesh_text(source: str | Path) -> TriMesh:
    """Plain-text mesh: one `v x y z` line per vertex and one `f i j k`
    line per triangle (1-based indices)."""
    text = Path(source).read_text() if isinstance(source, Path) else source
    verts, tris = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "v" and len(parts) == 4:
                verts.append([float(x) for x in parts[1:]])
            elif parts[0] == "f" and len(parts) == 4:
                tris.append([int(x) - 1 for x in parts[1:]])
            else:
                raise ValueError
        except ValueError:
            raise ValueError(f"line {lineno}: expected 'v x y z' or 'f i j k', "
                             f"got {raw!r}") from None
    return TriMesh(np.array(verts, dtype=float).reshape(-1, 3),
                   np.array(tris, dtype=np.int64).reshape(-1, 3))


def dump_mesh_text(mesh: TriMesh) -> str:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in mesh.triangles]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class Obstacle:
    name: str
    mesh: TriMesh
    pose: Pose = field(default_factory=Pose.identity)


@dataclass
class CollisionReport:
    """Intersection segments between two surfaces and their total length."""

    segments: list[tuple[np.ndarray, np.ndarray]]
    lengths: np.ndarray
    total_length: float

    @staticmethod
    def empty() -> "CollisionReport":
        return CollisionReport([], np.zeros(0), 0.0)

    @staticmethod
    def from_segments(starts: np.ndarray, ends: np.ndarray) -> "CollisionReport":
        if len(starts) == 0:
            return CollisionReport.empty()
        lengths = np.linalg.norm(ends - starts, axis=1)
        keep = lengths > SEGMENT_LENGTH_TOL
        starts, ends, lengths = starts[keep], ends[keep], lengths[keep]
        return CollisionReport([(s, e) for s, e in zip(starts, ends)],
                               lengths, float(lengths.sum()))

    def merged_with(self, other: "CollisionReport") -> "CollisionReport":
        return CollisionReport(self.segments + other.segments,
                               np.concatenate([self.lengths, other.lengths]),
                               self.total_length + other.total_length)


def _triangle_aabbs(verts: np.ndarray, tris: np.ndarray):
    corners = verts[tris]  # (m, 3, 3)
    return corners.min(axis=1), corners.max(axis=1)


def _candidate_pairs(verts_a, tris_a, verts_b, tris_b) -> np.ndarray:
    """Broad phase: vectorized per-triangle AABB overlap, pairs in a fixed
    (row-major) order so the narrow phase reduces deterministically."""
    amin, amax = _triangle_aabbs(verts_a, tris_a)
    bmin, bmax = _triangle_aabbs(verts_b, tris_b)
    margin = 1e-9
    overlap = np.all((amin[:, None, :] <= bmax[None, :, :] + margin)
                     & (bmin[None, :, :] <= amax[:, None, :] + margin), axis=2)
    return np.argwhere(overlap)


def _clip_interval(lo, hi, empty, p0, d, v0, v1, v2, normal):
    """Intersect the running parameter interval of line p0 + t*d with one
    triangle, expressed as three half-plane constraints in its plane."""
    for vi, vj in ((v0, v1), (v1, v2), (v2, v0)):
        m = cross3(normal, vj - vi)
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        a = np.einsum("ij,ij->i", d, m)
        b = np.einsum("ij,ij->i", vi - p0, m)
        pos = a > PARALLEL_TOL
        neg = a < -PARALLEL_TOL
        flat = ~(pos | neg)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = b / a
        lo = np.where(pos, np.maximum(lo, ratio), lo)
        hi = np.where(neg, np.minimum(hi, ratio), hi)
        empty |= flat & (b > PARALLEL_TOL)
    return lo, hi, empty


def _pair_segments(verts_a, tris_a, verts_b, tris_b, pairs):
    """Narrow phase over candidate pairs: the intersection segment of two
    transversal triangles is the overlap of the two parameter intervals
    that their in-plane half-plane constraints cut out of the common
    plane-plane intersection line. Coplanar pairs contribute no curve."""
    a = verts_a[tris_a[pairs[:, 0]]]  # (p, 3, 3)
    b = verts_b[tris_b[pairs[:, 1]]]
    n1 = cross3(a[:, 1] - a[:, 0], a[:, 2] - a[:, 0])
    n1 /= np.linalg.norm(n1, axis=1, keepdims=True)
    n2 = cross3(b[:, 1] - b[:, 0], b[:, 2] - b[:, 0])
    n2 /= np.linalg.norm(n2, axis=1, keepdims=True)
    d = cross3(n1, n2)
    dn = np.linalg.norm(d, axis=1)
    valid = dn > PARALLEL_TOL
    if not np.any(valid):
        return np.zeros((0, 3)), np.zeros((0, 3))
    a, b, n1, n2, d = a[valid], b[valid], n1[valid], n2[valid], d[valid]
    d /= np.linalg.norm(d, axis=1, keepdims=True)

    # Point on each intersection line: solve [n1; n2; d] x = rhs.
    m = np.stack([n1, n2, d], axis=1)
    rhs = np.stack([np.einsum("ij,ij->i", n1, a[:, 0]),
                    np.einsum("ij,ij->i", n2, b[:, 0]),
                    np.zeros(len(d))], axis=1)
    p0 = np.linalg.solve(m, rhs[:, :, None])[:, :, 0]

    lo = np.full(len(d), -np.inf)
    hi = np.full(len(d), np.inf)
    empty = np.zeros(len(d), dtype=bool)
    lo, hi, empty = _clip_interval(lo, hi, empty, p0, d,
                                   a[:, 0], a[:, 1], a[:, 2], n1)
    lo, hi, empty = _clip_interval(lo, hi, empty, p0, d,
                                   b[:, 0], b[:, 1], b[:, 2], n2)
    keep = ~empty & (hi - lo > SEGMENT_LENGTH_TOL)
    lo, hi, p0, d = lo[keep], hi[keep], p0[keep], d[keep]
    return p0 + lo[:, None] * d, p0 + hi[:, None] * d


def intersection_length(mesh_a: TriMesh, pose_a: Pose,
                        mesh_b: TriMesh, pose_b: Pose) -> CollisionReport:
    """Collision-line length l between two meshed surfaces: the summed
    length of all triangle-pair intersection segments."""
    verts_a = mesh_a.transformed(pose_a)
    verts_b = mesh_b.transformed(pose_b)
    if (np.any(verts_a.min(axis=0) > verts_b.max(axis=0) + 1e-9)
            or np.any(verts_b.min(axis=0) > verts_a.max(axis=0) + 1e-9)):
        return CollisionReport.empty()
    pairs = _candidate_pairs(verts_a, mesh_a.triangles, verts_b, mesh_b.triangles)
    if len(pairs) == 0:
        return CollisionReport.empty()
    starts, ends = _pair_segments(verts_a, mesh_a.triangles,
                                  verts_b, mesh_b.triangles, pairs)
    return CollisionReport.from_segments(starts, ends)


def _ray_crossings(origin: np.ndarray, direction: np.ndarray, verts: np.ndarray,
                   tris: np.ndarray, t_max: float = np.inf) -> list[float]:
    """Parameters of transversal ray/triangle crossings, deduplicated so a
    hit through a shared edge or vertex counts once."""
    v0, v1, v2 = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    e1, e2 = v1 - v0, v2 - v0
    h = cross3(np.broadcast_to(direction, e2.shape), e2)
    with np.errstate(divide="ignore", invalid="ignore"):
        det = np.einsum("ij,ij->i", e1, h)
        inv = 1.0 / det
        s = origin - v0
        u = inv * np.einsum("ij,ij->i", s, h)
        q = cross3(s, e1)
        v = inv * np.einsum("ij,ij->i", np.broadcast_to(direction, e1.shape), q)
        t = inv * np.einsum("ij,ij->i", e2, q)
        bc_tol = 1e-12
        ok = np.abs(det) > 1e-14  # tangential grazing never counts
        ok &= np.isfinite(t)
        ok &= (u >= -bc_tol) & (v >= -bc_tol) & (u + v <= 1.0 + bc_tol)
        ok &= (t > OCCLUSION_PARAM_TOL) & (t < t_max)
    ts = np.sort(t[ok])
    unique: list[float] = []
    for val in ts:
        if not unique or val - unique[-1] > OCCLUSION_PARAM_TOL:
            unique.append(float(val))
    return unique


# Fixed skew direction for point-in-volume parity rays; chosen to avoid
# axis-aligned mesh features.
_PARITY_DIR = np.array([0.5773503, 0.5856715, 0.5689213])
_PARITY_DIR = _PARITY_DIR / np.linalg.norm(_PARITY_DIR)


def _point_inside(point: np.ndarray, verts: np.ndarray, tris: np.ndarray) -> bool:
    return len(_ray_crossings(point, _PARITY_DIR, verts, tris)) % 2 == 1


def segment_hits(p0: np.ndarray, p1: np.ndarray,
                 obstacles) -> tuple[list[tuple[str, float]], float]:
    """All interior crossings of segment p0->p1 with obstacle surfaces,
    plus the total chord length of the segment inside obstacle volumes.

    Crossings split the segment into spans; a span contributes when its
    midpoint lies inside the obstacle, so entry/exit pairs measure their
    chord and a trailing unpaired crossing extends to the segment end.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    direction = p1 - p0
    seg_len = float(np.linalg.norm(direction))
    if seg_len == 0.0:
        raise ValueError("segment endpoints must differ")

    hits: list[tuple[str, float]] = []
    occlusion = 0.0
    for obstacle in obstacles:
        verts = obstacle.mesh.transformed(obstacle.pose)
        tris = obstacle.mesh.triangles
        unique = _ray_crossings(p0, direction, verts, tris,
                                t_max=1.0 - OCCLUSION_PARAM_TOL)
        if not unique:
            continue
        for val in unique:
            hits.append((obstacle.name, val))
        bounds = [0.0] + unique + [1.0]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            mid = p0 + 0.5 * (lo + hi) * direction
            if _point_inside(mid, verts, tris):
                occlusion += (hi - lo) * seg_len
    return hits, occlusion


def occlusion_length(p0: np.ndarray, p1: np.ndarray, obstacles) -> float:
    return segment_hits(p0, p1, obstacles)[1]


@dataclass
class VisionCone:
    """Monocular vision cone from the eye center toward the target; the
    half-angle adapts between a floor and a cap."""

    apex: np.ndarray
    axis: np.ndarray
    half_angle: float
    range: float
    min_half_angle: float = np.radians(2.0)
    max_half_angle: float = np.radians(30.0)
    widen_step: float = np.radians(0.5)

    def __post_init__(self):
        self.apex = np.asarray(self.apex, dtype=float).reshape(3)
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("cone axis must be a unit vector")
        self.axis = axis
        if not (self.min_half_angle <= self.half_angle <= self.max_half_angle):
            raise ValueError("cone half-angle outside its configured bounds")
        if self.range <= 0.0:
            raise ValueError("cone range must be positive")


def adapt_cone(cone: VisionCone, target_dir: np.ndarray) -> float:
    """Widen the cone when the vision axis lies inside it relative to the
    target direction, narrow it otherwise; clamped to the bounds."""
    u = np.asarray(target_dir, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("target direction must be a unit vector")
    if angle_between(cone.axis, u) <= cone.half_angle:
        return min(cone.half_angle + cone.widen_step, cone.max_half_angle)
    return max(cone.half_angle - cone.widen_step, cone.min_half_angle)


def cone_mesh(cone: VisionCone, facets: int = 16) -> TriMesh:
    """Closed triangulation of the cone truncated at its range: `facets`
    lateral triangles from the apex plus a fan over the base disc."""
    if facets < 8:
        raise ValueError("cone mesh needs at least 8 facets")
    axis = cone.axis
    helper = vec3(1.0, 0.0, 0.0)
    if abs(np.dot(axis, helper)) > 0.9:
        helper = vec3(0.0, 1.0, 0.0)
    u1 = cross3(axis, helper)
    u1 /= np.linalg.norm(u1)
    u2 = cross3(axis, u1)
    center = cone.apex + cone.range * axis
    radius = cone.range * np.tan(cone.half_angle)
    angles = 2.0 * np.pi * np.arange(facets) / facets
    ring = (center[None, :] + radius * np.cos(angles)[:, None] * u1[None, :]
            + radius * np.sin(angles)[:, None] * u2[None, :])
    verts = np.vstack([cone.apex[None, :], center[None, :], ring])
    tris = []
    for i in range(facets):
        j = (i + 1) % facets
        tris.append((0, 2 + i, 2 + j))   # lateral
        tris.append((1, 2 + j, 2 + i))   # base
    return TriMesh.unchecked(verts, np.array(tris, dtype=np.int64))


def figure_world_meshes(figure: ArticulatedFigure,
                        config: Configuration) -> list[tuple[str, TriMesh, Pose]]:
    poses = forward_kinematics(figure, config)
    return [(link.name, link.mesh, poses[link.name])
            for link in figure.links if link.mesh is not None]


def figure_collision(obstacles, figure: ArticulatedFigure,
                     config: Configuration) -> CollisionReport:
    """Aggregate collision-line report of every figure link against every
    obstacle, reduced in a fixed order."""
    report = CollisionReport.empty()
    for _, mesh, pose in figure_world_meshes(figure, config):
        for obstacle in obstacles:
            report = report.merged_with(
                intersection_length(mesh, pose, obstacle.mesh, obstacle.pose))
    return report


def _perturbed(figure, config: Configuration, dof: str, delta: float) -> Configuration:
    if dof in ("x", "y", "theta", "z"):
        base = config.base.copy()
        base[{"x": 0, "y": 1, "theta": 2, "z": 3}[dof]] += delta
        return config.replace(base=base)
    joints = config.joints.copy()
    joints[figure.joint_index(dof)] += delta
    return config.replace(joints=joints)


def dof_step(figure, dof: str, step_pos: float, step_rot: float) -> float:
    if dof in ("x", "y", "z"):
        return step_pos
    if dof == "theta":
        return step_rot
    joint = figure.link(dof).joint
    return step_rot if joint.kind == "revolute" else step_pos


def finite_difference_gradient(criterion, figure, config: Configuration,
                               dofs, step_pos: float = FD_STEP_POS,
                               step_rot: float = FD_STEP_ROT) -> np.ndarray:
    """Central differences of a scalar criterion over named DOFs
    ("x" | "y" | "theta" | "z" | jointed link name)."""
    grad = np.zeros(len(dofs))
    for k, dof in enumerate(dofs):
        h = dof_step(figure, dof, step_pos, step_rot)
        if h <= 0.0:
            raise ValueError("finite-difference step must be positive")
        hi = criterion(_perturbed(figure, config, dof, +h))
        lo = criterion(_perturbed(figure, config, dof, -h))
        grad[k] = (hi - lo) / (2.0 * h)
    return grad


def grad_collision_length(obstacles, figure: ArticulatedFigure,
                          config: Configuration, dofs,
                          step_pos: float = FD_STEP_POS,
                          step_rot: float = FD_STEP_ROT) -> np.ndarray:
    """Finite-difference gradient of the total collision-line length over
    the requested DOFs; exactly zero where the criterion is flat zero."""
    def criterion(c: Configuration) -> float:
        return figure_collision(obstacles, figure, c).total_length

    return finite_difference_gradient(criterion, figure, config, dofs,
                                      step_pos, step_rot)
