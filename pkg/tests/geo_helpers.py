"""Shared geometry fixtures: icosphere, plane patches, brute-force oracles."""

import numpy as np

from valvefsi.geometry import ImmersedSurface
from valvefsi.geometry.distance import closest_on_segments, closest_on_triangles


def plane_z0_surface(half: float = 1.0, n: int = 8) -> ImmersedSurface:
    """Triangulated square patch of the plane z = 0 with normals along +z."""
    xs = np.linspace(-half, half, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=-1)
    tris = []
    for i in range(n):
        for j in range(n):
            v00 = i * (n + 1) + j
            v01 = v00 + 1
            v10 = v00 + (n + 1)
            v11 = v10 + 1
            tris.append([v00, v10, v01])
            tris.append([v01, v10, v11])
    return ImmersedSurface(
        ref_vertices=verts,
        simplices=np.array(tris, dtype=np.int64),
        opening_field=np.zeros_like(verts),
    )


def icosphere(radius: float = 1.0, subdivisions: int = 2) -> ImmersedSurface:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = list(verts)
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    verts = np.array(verts) * radius
    faces = np.array(faces, dtype=np.int64)
    # enforce outward orientation
    tri = verts[faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    centers = tri.mean(axis=1)
    flip = np.einsum("nd,nd->n", normals, centers) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return ImmersedSurface(
        ref_vertices=verts,
        simplices=faces,
        opening_field=np.zeros_like(verts),
    )


def segment_surface_2d(a, b, n: int = 1, g=None) -> ImmersedSurface:
    """Polyline from a to b split into n segments."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = a + np.linspace(0, 1, n + 1)[:, None] * (b - a)
    simplices = np.stack([np.arange(n), np.arange(1, n + 1)], axis=-1)
    gfield = np.zeros_like(pts) if g is None else np.broadcast_to(g, pts.shape).copy()
    return ImmersedSurface(ref_vertices=pts, simplices=simplices, opening_field=gfield)


def brute_force_unsigned(surface, points):
    """Exhaustive min over all simplices (the oracle for BVH pruning)."""
    points = np.atleast_2d(points)
    best = np.full(len(points), np.inf)
    v = surface.vertices
    for s in surface.simplices:
        if surface.dim == 2:
            d2, _, _ = closest_on_segments(
                points,
                np.broadcast_to(v[s[0]], points.shape),
                np.broadcast_to(v[s[1]], points.shape),
            )
        else:
            d2, _, _ = closest_on_triangles(
                points,
                np.broadcast_to(v[s[0]], points.shape),
                np.broadcast_to(v[s[1]], points.shape),
                np.broadcast_to(v[s[2]], points.shape),
            )
        best = np.minimum(best, d2)
    return np.sqrt(best)


def random_bumpy_sphere(rng, n_sub: int = 2) -> ImmersedSurface:
    """Icosphere with a deterministic radial perturbation (generic test surface)."""
    base = icosphere(1.0, n_sub)
    r = base.ref_vertices
    bump = 1.0 + 0.15 * np.sin(3 * r[:, 0]) * np.cos(2 * r[:, 1]) + 0.1 * r[:, 2] ** 2
    verts = r * bump[:, None]
    return ImmersedSurface(
        ref_vertices=verts,
        simplices=base.simplices,
        opening_field=np.zeros_like(verts),
    )
