"""Shared mesh helpers for tests: independent tessellations and an
independent triangle-pair intersection oracle."""

import numpy as np

from maquette.geometry import TriMesh


def fine_box(center, size, divisions=4) -> TriMesh:
    """Axis-aligned box with every face split into divisions^2 quads;
    built independently of TriMesh.box."""
    cx, cy, cz = np.asarray(center, dtype=float)
    hx, hy, hz = np.asarray(size, dtype=float) / 2.0
    verts = []
    tris = []

    def add_face(origin, du, dv):
        base = len(verts)
        n = divisions
        for i in range(n + 1):
            for j in range(n + 1):
                verts.append(origin + du * (i / n) + dv * (j / n))
        for i in range(n):
            for j in range(n):
                a = base + i * (n + 1) + j
                b = a + (n + 1)
                tris.append((a, b, a + 1))
                tris.append((a + 1, b, b + 1))

    c = np.array([cx, cy, cz])
    ex, ey, ez = np.array([hx, 0, 0]), np.array([0, hy, 0]), np.array([0, 0, hz])
    add_face(c - ex - ey - ez, 2 * ey, 2 * ez)  # x-
    add_face(c + ex - ey - ez, 2 * ey, 2 * ez)  # x+
    add_face(c - ex - ey - ez, 2 * ex, 2 * ez)  # y-
    add_face(c - ex + ey - ez, 2 * ex, 2 * ez)  # y+
    add_face(c - ex - ey - ez, 2 * ex, 2 * ey)  # z-
    add_face(c - ex - ey + ez, 2 * ex, 2 * ey)  # z+
    return TriMesh(np.array(verts), np.array(tris))


def _edge_plane_crossings(tri, normal, point):
    """Points where the triangle boundary crosses the plane."""
    out = []
    d = [float(np.dot(v - point, normal)) for v in tri]
    for i in range(3):
        j = (i + 1) % 3
        if d[i] == 0.0:
            out.append(tri[i])
        elif d[i] * d[j] < 0.0:
            t = d[i] / (d[i] - d[j])
            out.append(tri[i] + t * (tri[j] - tri[i]))
    return out


def tri_tri_segment_length_oracle(t1, t2) -> float:
    """Independent formulation: the segment is the overlap of the two
    chords each triangle cuts on the other's plane."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    n1 = np.cross(t1[1] - t1[0], t1[2] - t1[0])
    n2 = np.cross(t2[1] - t2[0], t2[2] - t2[0])
    n1 = n1 / np.linalg.norm(n1)
    n2 = n2 / np.linalg.norm(n2)
    d = np.cross(n1, n2)
    if np.linalg.norm(d) < 1e-9:
        return 0.0
    d = d / np.linalg.norm(d)
    chord1 = _edge_plane_crossings(t1, n2, t2[0])
    chord2 = _edge_plane_crossings(t2, n1, t1[0])
    if len(chord1) < 2 or len(chord2) < 2:
        return 0.0
    s1 = sorted(float(np.dot(p, d)) for p in chord1)
    s2 = sorted(float(np.dot(p, d)) for p in chord2)
    return max(0.0, min(s1[-1], s2[-1]) - max(s1[0], s2[0]))
