"""Surface import/export: ASCII STL and the internal per-vertex g/Hhat format."""

import numpy as np

from .surface import ImmersedSurface


def write_stl(surface: ImmersedSurface, path, name: str = "valvefsi"):
    """ASCII STL of the current configuration (3D surfaces only)."""
    if surface.dim != 3:
        raise ValueError("STL export requires a 3D surface")
    v = surface.vertices[surface.simplices]
    with open(path, "w") as f:
        f.write(f"solid {name}\n")
        for tri, n in zip(v, surface.simplex_normals):
            f.write(f"  facet normal {n[0]:.9e} {n[1]:.9e} {n[2]:.9e}\n")
            f.write("    outer loop\n")
            for p in tri:
                f.write(f"      vertex {p[0]:.9e} {p[1]:.9e} {p[2]:.9e}\n")
            f.write("    endloop\n")
            f.write("  endfacet\n")
        f.write(f"endsolid {name}\n")


def read_stl(path) -> ImmersedSurface:
    """Read an ASCII STL into a surface with zero opening field.

    Vertices repeated across facets are merged by exact coordinate match.
    """
    tris = []
    with open(path) as f:
        current = []
        for line in f:
            parts = line.split()
            if parts and parts[0] == "vertex":
                current.append([float(x) for x in parts[1:4]])
                if len(current) == 3:
                    tris.append(current)
                    current = []
    if not tris:
        raise ValueError(f"{path}: no facets found")
    flat = np.array(tris, dtype=float).reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    simplices = inverse.reshape(-1, 3)
    return ImmersedSurface(
        ref_vertices=uniq,
        simplices=simplices,
        opening_field=np.zeros_like(uniq),
    )


def write_surface(surface: ImmersedSurface, path):
    """Internal format: header, per-vertex position/g/Hhat columns, simplices."""
    hh = surface.ref_curvature
    if hh is None:
        hh = np.zeros(surface.n_vertices)
    with open(path, "w") as f:
        f.write("valvefsi-surface 1\n")
        f.write(f"{surface.dim} {surface.n_vertices} {surface.n_simplices}\n")
        for x, g, h in zip(surface.ref_vertices, surface.opening_field, hh):
            cols = list(x) + list(g) + [h]
            f.write(" ".join(f"{v:.17g}" for v in cols) + "\n")
        for s in surface.simplices:
            f.write(" ".join(str(i) for i in s) + "\n")


def read_surface(path) -> ImmersedSurface:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("valvefsi-surface"):
        raise ValueError(f"{path}: not a valvefsi surface file")
    dim, nverts, nsimp = (int(x) for x in lines[1].split())
    rows = np.array(
        [[float(x) for x in lines[2 + i].split()] for i in range(nverts)]
    )
    if rows.shape[1] != 2 * dim + 1:
        raise ValueError(f"{path}: expected {2 * dim + 1} columns per vertex row")
    simplices = np.array(
        [[int(x) for x in lines[2 + nverts + i].split()] for i in range(nsimp)],
        dtype=np.int64,
    )
    return ImmersedSurface(
        ref_vertices=rows[:, :dim],
        simplices=simplices,
        opening_field=rows[:, dim : 2 * dim],
        ref_curvature=rows[:, 2 * dim],
    )
