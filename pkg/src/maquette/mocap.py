"""Motion-capture trajectory files: CSV replay of per-point pose tracks,
with twists filled by finite differences when absent."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .transforms import Pose, quat_conjugate, quat_multiply, quat_to_rotvec

HEADER = ["t", "point_id", "px", "py", "pz", "qw", "qx", "qy", "qz"]
TWIST_COLUMNS = ["vx", "vy", "vz", "wx", "wy", "wz"]


@dataclass(eq=False)
class PointTrack:
    times: np.ndarray         # strictly increasing
    positions: np.ndarray     # (n, 3)
    orientations: np.ndarray  # (n, 4) unit quaternions
    twists: np.ndarray        # (n, 6)

    def sample(self, t: float) -> tuple[Pose, np.ndarray]:
        """Linear interpolation between frames, clamped at the ends."""
        times = self.times
        if t <= times[0]:
            return Pose(self.positions[0], self.orientations[0]), self.twists[0]
        if t >= times[-1]:
            return (Pose(self.positions[-1], self.orientations[-1]),
                    self.twists[-1])
        hi = int(np.searchsorted(times, t, side="right"))
        lo = hi - 1
        alpha = (t - times[lo]) / (times[hi] - times[lo])
        position = (1 - alpha) * self.positions[lo] + alpha * self.positions[hi]
        qa, qb = self.orientations[lo], self.orientations[hi]
        if float(qa @ qb) < 0.0:
            qb = -qb
        quat = (1 - alpha) * qa + alpha * qb
        quat /= np.linalg.norm(quat)
        twist = (1 - alpha) * self.twists[lo] + alpha * self.twists[hi]
        return Pose(position, quat), twist

    @property
    def duration(self) -> float:
        return float(self.times[-1])


@dataclass(eq=False)
class MocapTrajectory:
    points: dict[str, PointTrack]

    def sample(self, point_id: str, t: float) -> tuple[Pose, np.ndarray]:
        if point_id not in self.points:
            raise KeyError(f"unknown capture point {point_id!r}")
        return self.points[point_id].sample(t)

    @property
    def duration(self) -> float:
        return max(track.duration for track in self.points.values())


def _fill_twists(times, positions, orientations) -> np.ndarray:
    n = len(times)
    twists = np.zeros((n, 6))
    if n == 1:
        return twists
    for i in range(n):
        lo = max(i - 1, 0)
        hi = min(i + 1, n - 1)
        dt = times[hi] - times[lo]
        twists[i, :3] = (positions[hi] - positions[lo]) / dt
        rel = quat_multiply(orientations[hi], quat_conjugate(orientations[lo]))
        twists[i, 3:] = quat_to_rotvec(rel) / dt
    return twists


def load_mocap(source: str | Path) -> MocapTrajectory:
    """Parse the CSV (header mandatory); rows may carry twists, otherwise
    central finite differences of the poses fill them (one-sided at the
    ends)."""
    text = Path(source).read_text() if isinstance(source, Path) else source
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValueError("mocap file is empty") from None
    if header[:9] != HEADER:
        raise ValueError(f"mocap header must start with {','.join(HEADER)}")
    has_twist = header[9:15] == TWIST_COLUMNS
    rows: dict[str, list] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) < 9:
            raise ValueError(f"mocap line {lineno}: expected at least 9 columns")
        point_id = row[1].strip()
        values = [float(x) for x in row[:1] + row[2:]]
        rows.setdefault(point_id, []).append((lineno, values))
    if not rows:
        raise ValueError("mocap file has no frames")

    points: dict[str, PointTrack] = {}
    for point_id, entries in rows.items():
        times = np.array([v[0] for _, v in entries])
        if np.any(np.diff(times) <= 0.0):
            raise ValueError(
                f"mocap times for point {point_id!r} must strictly increase")
        positions = np.array([v[1:4] for _, v in entries])
        orientations = np.array([v[4:8] for _, v in entries])
        norms = np.linalg.norm(orientations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            bad = entries[int(np.argmax(np.abs(norms - 1.0)))][0]
            raise ValueError(f"mocap line {bad}: quaternion is not unit norm")
        orientations /= norms[:, None]
        if has_twist and len(entries[0][1]) >= 14:
            twists = np.array([v[8:14] for _, v in entries])
        else:
            twists = _fill_twists(times, positions, orientations)
        points[point_id] = PointTrack(times, positions, orientations, twists)
    return MocapTrajectory(points)
